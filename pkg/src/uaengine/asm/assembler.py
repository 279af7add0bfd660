"""Two-pass assembler for stream programs.

Source grammar, one statement per line, ``;`` starts a comment::

    label:
    .entry <serviceTypeId> <label>
    OPCODE[.suffix] operand, operand, ...

Operands are streams ``s0``..``s15``, index registers ``x0``..``x7``,
condition names, labels and integer immediates (decimal or ``0x`` hex).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..streamvm.isa import LDI_RANGES, NUM_INDEX, NUM_STREAMS, STREAM_CONDS, Cond, Instruction, Op, Tag
from ..streamvm.program import VmProgram

_LABEL_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_UNTYPED = {"HALT": Op.HALT, "RET": Op.RET, "BR": Op.BR, "CALL": Op.CALL, "BRC": Op.BRC,
            "TRAP": Op.TRAP, "MKIDX": Op.MKIDX, "SEEK": Op.SEEK}
_TYPED = {"COPY": Op.COPY, "SKIP": Op.SKIP, "CMP": Op.CMP, "EMIT": Op.EMIT, "LDI": Op.LDI}
_LENGTH = {Op.HALT: 1, Op.RET: 1, Op.BR: 3, Op.CALL: 3, Op.BRC: 4, Op.TRAP: 2, Op.MKIDX: 2,
           Op.SEEK: 2, Op.COPY: 2, Op.SKIP: 2, Op.CMP: 2, Op.EMIT: 2, Op.LDI: 6}
_HEX_TAGS = frozenset({Tag.u32, Tag.f32})


class AsmError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {type(self).__name__}: {message}")
        self.line = line
        self.errors: list[AsmError] = [self]


class UndefinedLabel(AsmError):
    pass


class DuplicateLabel(AsmError):
    pass


class OperandOutOfRange(AsmError):
    pass


class UnknownMnemonic(AsmError):
    pass


class AsmSyntaxError(AsmError):
    pass


@dataclass
class Statement:
    line: int
    op: Op
    tag: Tag | None
    operands: list[str]
    address: int = 0


@dataclass
class Source:
    statements: list[Statement] = field(default_factory=list)
    labels: dict[str, int] = field(default_factory=dict)  # label -> address
    label_lines: dict[str, int] = field(default_factory=dict)
    entries: list[tuple[int, str, int]] = field(default_factory=list)  # (service, label, line)
    size: int = 0


def _strip(line: str) -> str:
    return line.split(";", 1)[0].strip()


def parse(text: str) -> tuple[Source, list[AsmError]]:
    """First pass: statements, label addresses and entry directives."""
    src = Source()
    errors: list[AsmError] = []
    pc = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        while line:
            head, colon, rest = line.partition(":")
            if colon and _LABEL_RE.match(head.strip()) and " " not in head.strip():
                name = head.strip()
                if name in src.labels:
                    errors.append(DuplicateLabel(f"label {name!r} already defined on line {src.label_lines[name]}", lineno))
                else:
                    src.labels[name] = pc
                    src.label_lines[name] = lineno
                line = rest.strip()
                continue
            break
        if not line:
            continue
        if line.startswith("."):
            parts = line.split()
            if parts[0] != ".entry" or len(parts) != 3:
                errors.append(AsmSyntaxError(f"bad directive {line!r}", lineno))
                continue
            try:
                service = int(parts[1], 0)
            except ValueError:
                errors.append(AsmSyntaxError(f"service type id {parts[1]!r} is not an integer", lineno))
                continue
            if not 0 <= service <= 0xFFFFFFFF:
                errors.append(OperandOutOfRange(f"service type id {service}", lineno))
                continue
            src.entries.append((service, parts[2], lineno))
            continue
        mnemonic, _, operand_text = line.partition(" ")
        name, dot, suffix = mnemonic.upper().partition(".")
        operands = [o.strip() for o in operand_text.split(",")] if operand_text.strip() else []
        if name in _UNTYPED and not dot:
            op, tag = _UNTYPED[name], None
        elif name in _TYPED and dot and suffix.lower() in Tag.__members__:
            op, tag = _TYPED[name], Tag[suffix.lower()]
            if op is Op.LDI and tag not in LDI_RANGES:
                errors.append(UnknownMnemonic(f"LDI has no {suffix.lower()} form", lineno))
                continue
        else:
            errors.append(UnknownMnemonic(f"unknown mnemonic {mnemonic!r}", lineno))
            continue
        src.statements.append(Statement(lineno, op, tag, operands, pc))
        pc += _LENGTH[op]
    src.size = pc
    return src, errors


def _int(text: str, line: int) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise AsmSyntaxError(f"expected an integer, got {text!r}", line) from None


def _reg(text: str, prefix: str, limit: int, line: int) -> int:
    t = text.lower()
    if not t.startswith(prefix) or not t[1:].isdigit():
        raise AsmSyntaxError(f"expected {prefix}<n>, got {text!r}", line)
    n = int(t[1:])
    if n >= limit:
        raise OperandOutOfRange(f"{text} (limit {prefix}{limit - 1})", line)
    return n


def _stream(text: str, line: int) -> int:
    return _reg(text, "s", NUM_STREAMS, line)


def _target(text: str, labels: dict[str, int], line: int) -> int:
    if text not in labels:
        if not _LABEL_RE.match(text):
            raise AsmSyntaxError(f"expected a label, got {text!r}", line)
        raise UndefinedLabel(f"label {text!r} is not defined", line)
    return labels[text]


def _arity(st: Statement, n: int) -> None:
    if len(st.operands) != n:
        raise AsmSyntaxError(f"{st.op.name} takes {n} operand(s), got {len(st.operands)}", st.line)


def _offset(st: Statement, target: int) -> int:
    off = target - (st.address + _LENGTH[st.op])
    if not -0x8000 <= off <= 0x7FFF:
        raise OperandOutOfRange(f"branch offset {off} beyond +-32767", st.line)
    return off


def build_instruction(st: Statement, labels: dict[str, int]) -> Instruction:
    op, ops, line = st.op, st.operands, st.line
    if op in (Op.HALT, Op.RET):
        _arity(st, 0)
        return Instruction(op, length=1)
    if op in (Op.BR, Op.CALL):
        _arity(st, 1)
        return Instruction(op, imm=_offset(st, _target(ops[0], labels, line)), length=3)
    if op is Op.BRC:
        if not ops or ops[0].upper() not in Cond.__members__:
            raise AsmSyntaxError(f"BRC needs a condition ({', '.join(Cond.__members__)})", line)
        cond = Cond[ops[0].upper()]
        if cond in STREAM_CONDS:
            _arity(st, 3)
            stream = _stream(ops[1], line)
        else:
            _arity(st, 2)
            stream = 0
        return Instruction(op, a=cond, b=stream, imm=_offset(st, _target(ops[-1], labels, line)), length=4)
    if op is Op.TRAP:
        _arity(st, 1)
        code = _int(ops[0], line)
        if not 0 <= code <= 0xFF:
            raise OperandOutOfRange(f"trap code {code}", line)
        return Instruction(op, a=code, length=2)
    if op in (Op.MKIDX, Op.SEEK):
        _arity(st, 2)
        return Instruction(op, a=_stream(ops[0], line), b=_reg(ops[1], "x", NUM_INDEX, line), length=2)
    if op in (Op.COPY, Op.CMP):
        _arity(st, 2)
        return Instruction(op, st.tag, _stream(ops[0], line), _stream(ops[1], line), length=2)
    if op in (Op.SKIP, Op.EMIT):
        _arity(st, 1)
        return Instruction(op, st.tag, _stream(ops[0], line), length=2)
    _arity(st, 2)
    imm = _int(ops[1], line)
    lo, hi = LDI_RANGES[st.tag]
    if not lo <= imm <= hi:
        raise OperandOutOfRange(f"immediate {imm} outside [{lo}, {hi}] for {st.tag.name}", line)
    return Instruction(op, st.tag, _stream(ops[0], line), imm=imm, length=6)


def assemble(text: str, name: str = "program") -> VmProgram:
    """Assemble source text; raises the first AsmError with ``.errors`` listing all."""
    src, errors = parse(text)
    code = bytearray()
    for st in src.statements:
        try:
            code += build_instruction(st, src.labels).encode()
        except AsmError as exc:
            errors.append(exc)
            code += bytes(_LENGTH[st.op])  # keep later addresses stable
    entries: dict[int, int] = {}
    for service, label, line in src.entries:
        if label not in src.labels:
            errors.append(UndefinedLabel(f"entry label {label!r} is not defined", line))
        elif src.labels[label] >= src.size:
            errors.append(AsmSyntaxError(f"entry label {label!r} is past the last instruction", line))
        elif service in entries:
            errors.append(DuplicateLabel(f"service {service} has two entry points", line))
        else:
            entries[service] = src.labels[label]
    if errors:
        errors.sort(key=lambda e: e.line)
        first = errors[0]
        first.errors = errors
        raise first
    return VmProgram(name, bytes(code), entries)


# --- canonical listing ----------------------------------------------------


def label_names(targets: set[int], entries: dict[int, int]) -> dict[int, str]:
    names = {addr: f"L{addr:04x}" for addr in targets}
    for service, addr in sorted(entries.items()):
        names[addr] = f"entry_{service}"
    return names


def format_instruction(ins: Instruction, target_name: str | None = None) -> str:
    op = ins.op
    if op in (Op.HALT, Op.RET):
        return op.name
    if op in (Op.BR, Op.CALL):
        return f"{op.name} {target_name}"
    if op is Op.BRC:
        cond = Cond(ins.a)
        if cond in STREAM_CONDS:
            return f"BRC {cond.name}, s{ins.b}, {target_name}"
        return f"BRC {cond.name}, {target_name}"
    if op is Op.TRAP:
        return f"TRAP {ins.a}"
    if op in (Op.MKIDX, Op.SEEK):
        return f"{op.name} s{ins.a}, x{ins.b}"
    mnemonic = f"{op.name}.{ins.tag.name}"
    if op in (Op.COPY, Op.CMP):
        return f"{mnemonic} s{ins.a}, s{ins.b}"
    if op in (Op.SKIP, Op.EMIT):
        return f"{mnemonic} s{ins.a}"
    imm = f"0x{ins.imm:08X}" if ins.tag in _HEX_TAGS else str(ins.imm)
    return f"{mnemonic} s{ins.a}, {imm}"


def render_listing(items: list[tuple[int, Instruction, int | None]], size: int, entries: dict[int, int]) -> str:
    """Shared listing layout: entry directives, then labelled instructions."""
    targets = {t for _, _, t in items if t is not None}
    names = label_names(targets, entries)
    lines = [f".entry {service} {names[addr]}" for service, addr in sorted(entries.items())]
    for addr, ins, target in items:
        if addr in names:
            lines.append(f"{names[addr]}:")
        lines.append("    " + format_instruction(ins, names.get(target) if target is not None else None))
    if size in names:
        lines.append(f"{names[size]}:")
    return "\n".join(lines) + "\n"


def canonical_source(text: str) -> str:
    """Source normalized from the parse alone: comments, spacing, case and label names."""
    src, errors = parse(text)
    if errors:
        raise errors[0]
    items = []
    for st in src.statements:
        ins = build_instruction(st, src.labels)
        target = None
        if st.op in (Op.BR, Op.CALL, Op.BRC):
            target = _target(st.operands[-1], src.labels, st.line)
        items.append((st.address, ins, target))
    entries = {service: src.labels[label] for service, label, _ in src.entries}
    return render_listing(items, src.size, entries)
