"""Interpreter for stream programs.

Cost model: one cycle per instruction byte fetched plus one per data byte
read from or written to a stream.  An instruction is only committed when
its full cost fits in the remaining budget, so an exhausted run reports
exactly ``budget`` cycles.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from ..codec import CodecError, DataValue, LocalizedText, NodeId, QualifiedName, Reader, Truncated, Variant
from ..codec.binary import READERS, WRITERS
from ..nsimage.port import PortError
from .isa import NUM_INDEX, TAG_TYPES, Cond, IllegalOpcode, Instruction, Op, Tag, decode
from .program import VmProgram
from .scan import ScanMalformed, ScanOverrun, scan_length
from .streams import Stream

STACK_DEPTH = 64


class TrapKind(enum.Enum):
    STREAM_OVERRUN = "TrapStreamOverrun"
    STACK_OVERFLOW = "TrapStackOverflow"
    STACK_UNDERFLOW = "TrapStackUnderflow"
    ILLEGAL_OPCODE = "TrapIllegalOpcode"
    TYPE_MISMATCH = "TrapTypeMismatch"
    PC_OUT_OF_BOUNDS = "TrapPcOutOfBounds"
    EXPLICIT = "TrapExplicit"


class Outcome(enum.Enum):
    HALTED = "halted"
    TRAPPED = "trapped"
    BUDGET = "budget-exhausted"


class Trap(Exception):
    def __init__(self, kind: TrapKind, pc: int, detail: str = "", stream: int | None = None):
        super().__init__(f"{kind.value}@{pc}: {detail}")
        self.kind, self.pc, self.detail, self.stream = kind, pc, detail, stream


_DEFAULTS = {
    Tag.bool: False, Tag.i8: 0, Tag.u8: 0, Tag.i16: 0, Tag.u16: 0, Tag.i32: 0, Tag.u32: 0,
    Tag.f32: 0.0, Tag.f64: 0.0, Tag.str: None, Tag.nid: NodeId(), Tag.lt: LocalizedText(),
    Tag.qn: QualifiedName(), Tag.var: Variant(), Tag.dv: DataValue(), Tag.dt: 0,
}
_NUMERIC = frozenset({Tag.bool, Tag.i8, Tag.u8, Tag.i16, Tag.u16, Tag.i32, Tag.u32, Tag.f32, Tag.f64, Tag.dt})
_PRIMARY_STREAMS = (0, 1)


def encode_tagged(tag: Tag, value) -> bytes:
    buf = bytearray()
    WRITERS[TAG_TYPES[tag]](buf, value)
    return bytes(buf)


def encode_immediate(tag: Tag, imm: int) -> bytes:
    if tag is Tag.f32:
        return struct.pack("<I", imm)
    if tag is Tag.dt:
        return struct.pack("<q", imm)
    if tag is Tag.bool:
        return bytes([imm])
    fmt = {Tag.i8: "<b", Tag.u8: "<B", Tag.i16: "<h", Tag.u16: "<H", Tag.i32: "<i", Tag.u32: "<I"}[tag]
    return struct.pack(fmt, imm)


@dataclass
class RunStats:
    fetch_bytes: int = 0
    # bytes moved through the request/response streams (message buffer SRAM)
    buffer_bytes: int = 0
    port_bytes: int = 0
    scratch_bytes: int = 0
    instructions: int = 0

    def add_stream(self, index: int, n: int) -> None:
        if index in _PRIMARY_STREAMS:
            self.buffer_bytes += n
        elif index == 2:
            self.port_bytes += n
        else:
            self.scratch_bytes += n


@dataclass
class RunResult:
    outcome: Outcome
    cycles: int
    trap: Trap | None = None
    stats: RunStats = field(default_factory=RunStats)
    events: list | None = None

    @property
    def halted(self) -> bool:
        return self.outcome is Outcome.HALTED


class Vm:
    """One stream processor.  With ``record`` set, ``events`` gets one entry per
    executed instruction: ``(length, [(stream, bytes, offset), ...])`` where
    ``offset`` is the stream position the access started at, and stream -1
    stands for namespace image bytes touched behind the port (offset 0)."""

    def __init__(self, program: VmProgram, streams: list[Stream], record: bool = False):
        self.code = program.code
        self.program = program
        self.streams = streams
        self.pc = 0
        self.sp = -1
        self.stack = [0] * STACK_DEPTH
        self.eq = False
        self.lt = False
        self.idx = [0] * NUM_INDEX
        self.cycles = 0
        self.halted = False
        self.stats = RunStats()
        self.events: list[tuple[int, list[tuple[int, int, int]]]] | None = [] if record else None
        self._acc: list[tuple[int, int, int]] = []

    # --- value access ------------------------------------------------------

    def _read_value(self, pc: int, s: int, tag: Tag, offset: int = 0):
        stream = self.streams[s]
        r = Reader(stream.view(), pos=stream.rpos + offset)
        try:
            value = READERS[TAG_TYPES[tag]](r)
        except Truncated as exc:
            raise Trap(TrapKind.STREAM_OVERRUN, pc, str(exc), s) from None
        except (CodecError, ValueError) as exc:
            raise Trap(TrapKind.TYPE_MISMATCH, pc, str(exc), s) from None
        return value, r.pos - stream.rpos - offset

    def _check_write(self, pc: int, s: int, data: bytes) -> None:
        if not self.streams[s].can_write(len(data)):
            raise Trap(TrapKind.STREAM_OVERRUN, pc, f"stream s{s} full", s)

    def _write(self, pc: int, s: int, data: bytes) -> None:
        stream = self.streams[s]
        before = stream.memory_bytes()
        offset = stream.wpos
        try:
            stream.append(data)
        except PortError as exc:
            raise Trap(TrapKind.TYPE_MISMATCH, pc, str(exc), s) from None
        self.stats.add_stream(s, len(data))
        if self.events is not None:
            self._acc.append((s, len(data), offset))
            touched = stream.memory_bytes() - before
            if touched:
                self._acc.append((-1, touched, 0))

    def _consume(self, s: int, n: int) -> None:
        offset = self.streams[s].rpos
        self.streams[s].consume(n)
        self.stats.add_stream(s, n)
        if self.events is not None and n:
            self._acc.append((s, n, offset))

    # --- execution ---------------------------------------------------------

    def _charge(self, cost: int, budget: int) -> bool:
        if self.cycles + cost > budget:
            self.cycles = budget
            return False
        self.cycles += cost
        return True

    def step(self, budget: int) -> bool:
        """Execute one instruction; False if the budget ran out first."""
        pc = self.pc
        if not 0 <= pc < len(self.code):
            raise Trap(TrapKind.PC_OUT_OF_BOUNDS, pc, f"pc {pc} outside code of {len(self.code)} bytes")
        try:
            ins = decode(self.code, pc)
        except IllegalOpcode as exc:
            raise Trap(TrapKind.ILLEGAL_OPCODE, pc, str(exc)) from None
        nxt = pc + ins.length
        op = ins.op
        commit = self._plan(ins, pc, nxt)
        data_bytes, action = commit
        if not self._charge(ins.length + data_bytes, budget):
            return False
        self.stats.fetch_bytes += ins.length
        self.stats.instructions += 1
        self.pc = nxt
        action()
        if self.events is not None:
            self.events.append((ins.length, self._acc))
            self._acc = []
        if op is Op.HALT:
            self.halted = True
        return True

    def _plan(self, ins: Instruction, pc: int, nxt: int):
        op = ins.op
        if op is Op.HALT:
            return 0, lambda: None
        if op is Op.BR:
            return 0, lambda: setattr(self, "pc", nxt + ins.imm)
        if op is Op.BRC:
            def branch():
                if self._cond(ins.a, ins.b):
                    self.pc = nxt + ins.imm
            return 0, branch
        if op is Op.CALL:
            if self.sp >= STACK_DEPTH - 1:
                raise Trap(TrapKind.STACK_OVERFLOW, pc, f"sp={self.sp}")

            def call():
                self.sp += 1
                self.stack[self.sp] = nxt
                self.pc = nxt + ins.imm
            return 0, call
        if op is Op.RET:
            if self.sp < 0:
                raise Trap(TrapKind.STACK_UNDERFLOW, pc, "return with empty stack")

            def ret():
                self.pc = self.stack[self.sp]
                self.sp -= 1
            return 0, ret
        if op is Op.TRAP:
            raise Trap(TrapKind.EXPLICIT, pc, f"code {ins.a}")
        if op is Op.MKIDX:
            return 0, lambda: self.idx.__setitem__(ins.b, self.streams[ins.a].rpos)
        if op is Op.SEEK:
            target = self.idx[ins.b]
            if target > self.streams[ins.a].wpos:
                raise Trap(TrapKind.STREAM_OVERRUN, pc, f"seek s{ins.a} to {target}", ins.a)
            return 0, lambda: self.streams[ins.a].seek(target)

        tag = ins.tag
        if op is Op.COPY:
            value, n = self._read_value(pc, ins.a, tag)
            out = encode_tagged(tag, value)
            if ins.a != ins.b:
                self._check_write(pc, ins.b, out)

            def copy():
                self._consume(ins.a, n)
                if ins.a == ins.b:
                    self._check_write(pc, ins.b, out)
                self._write(pc, ins.b, out)
            return n + len(out), copy
        if op is Op.SKIP:
            stream = self.streams[ins.a]
            try:
                n = scan_length(stream.view(), stream.rpos, stream.wpos, tag)
            except ScanOverrun as exc:
                raise Trap(TrapKind.STREAM_OVERRUN, pc, str(exc), ins.a) from None
            except ScanMalformed as exc:
                raise Trap(TrapKind.TYPE_MISMATCH, pc, str(exc), ins.a) from None
            return n, lambda: self._consume(ins.a, n)
        if op is Op.CMP:
            va, na = self._read_value(pc, ins.a, tag)
            vb, nb = self._read_value(pc, ins.b, tag, offset=na if ins.a == ins.b else 0)

            def compare():
                self._consume(ins.a, na)
                self._consume(ins.b, nb)
                self._set_flags(tag, va, vb)
            return na + nb, compare
        if op is Op.EMIT:
            out = encode_tagged(tag, _DEFAULTS[tag])
        else:
            out = encode_immediate(tag, ins.imm)
        self._check_write(pc, ins.a, out)
        return len(out), lambda: self._write(pc, ins.a, out)

    def _set_flags(self, tag: Tag, va, vb) -> None:
        if tag in _NUMERIC:
            self.eq, self.lt = va == vb, va < vb
        else:
            self.eq = va == vb
            self.lt = encode_tagged(tag, va) < encode_tagged(tag, vb)

    def _cond(self, cond: int, stream: int) -> bool:
        if cond == Cond.EQ:
            return self.eq
        if cond == Cond.NE:
            return not self.eq
        if cond == Cond.LT:
            return self.lt
        if cond == Cond.GE:
            return not self.lt
        if cond == Cond.GT:
            return not self.lt and not self.eq
        if cond == Cond.LE:
            return self.lt or self.eq
        at_end = self.streams[stream].at_end
        return at_end if cond == Cond.EOS else not at_end

    def run(self, entry: int, budget: int) -> RunResult:
        self.pc = entry
        try:
            while not self.halted:
                if not self.step(budget):
                    return RunResult(Outcome.BUDGET, self.cycles, stats=self.stats)
        except Trap as trap:
            return RunResult(Outcome.TRAPPED, self.cycles, trap, self.stats)
        return RunResult(Outcome.HALTED, self.cycles, stats=self.stats)


class NoEntryPoint(KeyError):
    pass


def run_service(
    program: VmProgram, service: int, streams: list[Stream], budget: int = 1_000_000, record: bool = False
) -> RunResult:
    """Run ``program`` from the entry point registered for ``service``."""
    if service not in program.entry_points:
        raise NoEntryPoint(service)
    vm = Vm(program, streams, record)
    result = vm.run(program.entry_points[service], budget)
    result.events = vm.events
    return result


def typed_copy(tag: Tag, src: Stream, dst: Stream) -> int:
    """Move one value of ``tag`` from ``src`` to ``dst``; returns bytes consumed."""
    vm = Vm(VmProgram("copy", b"", {}), [src, dst])
    value, n = vm._read_value(0, 0, Tag(tag))
    out = encode_tagged(tag, value)
    vm._check_write(0, 1, out)
    vm._consume(0, n)
    vm._write(0, 1, out)
    return n
