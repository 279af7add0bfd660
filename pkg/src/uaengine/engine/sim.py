"""Event-driven two-clock simulation of the engine.

Three kinds of executor run tasks one at a time: the transport, and one per
stage (its communication processor ``cp`` and stream processor ``sp``). A
task is a list of operations:

* compute for ``n`` engine cycles,
* move ``n`` bytes through the shared memory port, one 4-byte grant at a time,
* a zero-time callback, which is where the functional engine runs.

A memory transaction issues at an engine edge, reaches the memory domain
after the synchronizer penalty, waits for its round-robin grant, transfers in
one memory cycle and is seen by the unit at the next engine edge.

Connections replay their inbound records closed-loop: the next record is fed
once the previous one produced its response, or right after it was received
if it produced none.
"""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from ..s3 import EngineConfig
from ..transport.chunks import SYMMETRIC_OVERHEAD
from .arbiter import RoundRobinArbiter
from .capture import Capture
from .clocks import ClockConfig
from .core import SIM_EPOCH, EngineCore
from .trace import ACTIVE, STALLED, CycleTrace, RequestMarker

PORT_WIDTH = 4
# bytes per engine cycle on the link side of the transport (MAC interface)
LINK_WIDTH = 1
# transport: frame header handling per chunk, engine cycles
FRAME_OVERHEAD_CYCLES = 2
# cp: compare the 32-byte session token against the stage's
TOKEN_COMPARE_CYCLES = 8
TRANSPORT = 0


class BufferBudgetExceeded(AssertionError):
    pass


def _words(n: int) -> int:
    return -(-n // PORT_WIDTH)


def _link(n: int) -> int:
    return -(-n // LINK_WIDTH)


@dataclass
class _Op:
    kind: str  # "c" compute, "m" memory, "f" callback
    unit: str = ""
    n: int = 0
    ns: bool = False
    fn: Callable[[], None] | None = None


@dataclass
class _Task:
    ops: deque
    done: Callable[[], None] | None = None


class _Executor:
    def __init__(self, name: str, requester: int):
        self.name = name
        self.requester = requester
        self.queue: deque[_Task] = deque()
        self.task: _Task | None = None


@dataclass
class _Conn:
    index: int
    inbound: list[bytes]
    tc: object
    pos: int = 0
    start: int | None = None
    buffer: int | None = None
    in_bytes: int = 0
    responses: list[bytes] = field(default_factory=list)


@dataclass
class SimResult:
    responses: dict[int, list[bytes]]
    trace: CycleTrace
    engine: EngineCore

    def response_bytes(self) -> int:
        return sum(len(f) for frames in self.responses.values() for f in frames)


class Simulator:
    def __init__(self, config: EngineConfig, clocks: ClockConfig, seed: bytes | None = None):
        self.cfg = config
        self.clocks = clocks
        self.now = 0
        n = config.num_stages
        units = ["transport"] + [f"s{i}.{p}" for i in range(n) for p in ("cp", "sp")] + ["ns"]
        self.trace = CycleTrace(clocks, units)
        self.engine = EngineCore(config, clock=self.datetime, seed=seed or bytes(16), record_vm=True)
        self.arbiter = RoundRobinArbiter(n + 1)
        self.transport = _Executor("transport", TRANSPORT)
        self.stages = [_Executor(f"s{i}", i + 1) for i in range(n)]
        self._events: list = []
        self._seq = itertools.count()
        self._pending: dict[int, tuple[int, Callable[[int], None]]] = {}
        self._arb_ticks: set[int] = set()
        self.occupancy = [0] * n
        self.reserved: list[int | None] = [None] * n
        self._waiting: deque[_Conn] = deque()
        self.conns: list[_Conn] = []

    # --- time ----------------------------------------------------------------

    def datetime(self) -> int:
        """Simulated wall clock as DateTime ticks; one memory cycle is 10 ns."""
        ns = self.now * 10 // self.clocks.ticks_per_mem
        return SIM_EPOCH + ns // 100

    def _at(self, tick: int, fn: Callable[[], None]) -> None:
        heapq.heappush(self._events, (tick, next(self._seq), fn))

    def run_events(self) -> None:
        while self._events:
            tick, _, fn = heapq.heappop(self._events)
            self.now = tick
            fn()

    # --- executors --------------------------------------------------------------

    def submit(self, ex: _Executor, ops: list[_Op], done: Callable[[], None] | None = None) -> None:
        ex.queue.append(_Task(deque(ops), done))
        if ex.task is None:
            self._next_task(ex)

    def _next_task(self, ex: _Executor) -> None:
        if ex.task is not None or not ex.queue:
            return
        ex.task = ex.queue.popleft()
        self._at(self.clocks.next_engine_edge(self.now), lambda: self._step(ex))

    def _step(self, ex: _Executor) -> None:
        task = ex.task
        while task.ops:
            op = task.ops.popleft()
            if op.kind == "f":
                op.fn()
                continue
            if op.kind == "c":
                if op.n <= 0:
                    continue
                end = self.now + op.n * self.clocks.ticks_per_engine
                self.trace.mark(op.unit, self.now, end, ACTIVE)
                self._at(end, lambda: self._step(ex))
                return
            if op.kind == "m":
                words = _words(op.n)
                if words <= 0:
                    continue
                if words > 1:
                    task.ops.appendleft(_Op("m", op.unit, op.n - PORT_WIDTH, op.ns))
                self._transaction(ex, op)
                return
            raise AssertionError(op.kind)
        ex.task = None
        if task.done is not None:
            task.done()
        self._next_task(ex)

    # --- memory port ----------------------------------------------------------------

    def _transaction(self, ex: _Executor, op: _Op) -> None:
        c = self.clocks
        issued = self.now
        arrival = c.next_mem_edge(issued + c.sync_penalty * c.ticks_per_mem)

        def granted(grant_tick: int) -> None:
            end = grant_tick + c.ticks_per_mem
            resume = c.next_engine_edge(end)
            self.trace.mark(op.unit, issued, grant_tick, STALLED)
            if op.ns:
                self.trace.mark(op.unit, grant_tick, resume, STALLED)
                self.trace.mark("ns", grant_tick, end, ACTIVE)
            else:
                self.trace.mark(op.unit, grant_tick, end, ACTIVE)
                self.trace.mark(op.unit, end, resume, STALLED)
            unit = "ns" if op.ns else op.unit
            self.trace.grants.append((grant_tick // c.ticks_per_mem, ex.requester, unit))
            self._at(resume, lambda: self._step(ex))

        assert ex.requester not in self._pending
        self._pending[ex.requester] = (arrival, granted)
        self._schedule_arbitration(arrival)

    def _schedule_arbitration(self, tick: int) -> None:
        if tick not in self._arb_ticks:
            self._arb_ticks.add(tick)
            self._at(tick, lambda: self._arbitrate(tick))

    def _arbitrate(self, tick: int) -> None:
        self._arb_ticks.discard(tick)
        ready = [r for r, (arr, _) in self._pending.items() if arr <= tick]
        who = self.arbiter.grant(ready)
        if who is not None:
            _, granted = self._pending.pop(who)
            granted(tick)
        if self._pending:
            nxt = min(max(arr, tick + self.clocks.ticks_per_mem) for arr, _ in self._pending.values())
            self._schedule_arbitration(nxt)

    # --- message buffers --------------------------------------------------------------

    def _occupy(self, buffer: int, n: int) -> None:
        self.occupancy[buffer] += n
        total = sum(self.occupancy)
        if total > self.cfg.total_buffer_bytes:
            raise BufferBudgetExceeded(f"{total} bytes in message buffers at tick {self.now}")
        self.trace.buffer_peak = max(self.trace.buffer_peak, total)

    def _bound_stage(self, conn: _Conn) -> int | None:
        ch = conn.tc.channel_id
        if not ch:
            return None
        for st in self.engine.s3.stages:
            if st.channel_id == ch and st.state.value != "Free":
                return st.stage_id
        return None

    def _acquire(self, conn: _Conn) -> bool:
        if conn.buffer is not None:
            return True
        want = self._bound_stage(conn)
        candidates = [want] if want is not None else range(len(self.stages))
        for b in candidates:
            if self.reserved[b] is None:
                self.reserved[b] = conn.index
                conn.buffer = b
                return True
        return False

    def _release(self, conn: _Conn) -> None:
        b = conn.buffer
        if b is None:
            return
        self.occupancy[b] = 0
        self.reserved[b] = None
        conn.buffer = None
        waiting, self._waiting = self._waiting, deque()
        for w in waiting:
            self._feed(w)

    # --- connections -------------------------------------------------------------------

    def add_connection(self, index: int, inbound: list[bytes]) -> None:
        conn = _Conn(index, inbound, self.engine.connect())
        self.conns.append(conn)
        self._at(0, lambda: self._feed(conn))

    def _feed(self, conn: _Conn) -> None:
        if conn.pos >= len(conn.inbound):
            conn.tc.close()
            self._release(conn)
            return
        data = conn.inbound[conn.pos]
        needs_buffer = data[:3] == b"MSG" and not conn.tc.closed
        if needs_buffer and not self._acquire(conn):
            self._waiting.append(conn)
            return
        conn.pos += 1
        if conn.start is None:
            conn.start = self.now
        conn.in_bytes += len(data)
        rx = [_Op("c", "transport", FRAME_OVERHEAD_CYCLES + _link(len(data))), _Op("f", fn=lambda: self._process(conn, data))]
        self.submit(self.transport, rx)

    def _process(self, conn: _Conn, data: bytes) -> None:
        """Runs inside the transport's receive task, once the record is in."""
        tc = conn.tc
        before = len(tc.processed)
        outs = tc.receive(data)
        new = tc.processed[before:]
        task = self.transport.task
        if conn.buffer is not None:
            body = max(len(data) - SYMMETRIC_OVERHEAD, 0)
            self._occupy(conn.buffer, body)
            task.ops.append(_Op("m", "transport", body))
        if not outs:
            if not tc.reassembler.size:
                self._release(conn)
                conn.start = None
                conn.in_bytes = 0
            task.done = lambda: self._feed(conn)
            return
        works = [p.work for p in new if p.work is not None]
        response_size = sum(p.response_size for p in new)
        if works and conn.buffer is not None:
            b = conn.buffer
            ops: list[_Op] = []
            for w in works:
                ops += self._stage_ops(b, w)
            self._occupy(b, response_size)
            task.done = lambda: self.submit(self.stages[b], ops, lambda: self._transmit(conn, outs, new, response_size))
        else:
            task.done = lambda: self._transmit(conn, outs, new, response_size)

    def _stage_ops(self, b: int, w) -> list[_Op]:
        cp, sp = f"s{b}.cp", f"s{b}.sp"
        if w.vm_events is None:
            # session services and faults are composed by the communication processor
            return [
                _Op("m", cp, w.cp_read),
                _Op("c", cp, _words(w.cp_read) + _words(w.cp_write)),
                _Op("m", cp, w.cp_write),
            ]
        ops = [_Op("m", cp, w.cp_read), _Op("c", cp, _words(w.cp_read) + TOKEN_COMPARE_CYCLES)]
        # the stream processor costs what the VM charges: one cycle per
        # instruction byte and per data byte. The request and response streams
        # each keep one memory word in a line register, so only accesses that
        # reach a new word go through the memory port; image lookups always do.
        compute = 0
        line = {0: None, 1: None}
        for length, accesses in w.vm_events:
            compute += length + sum(n for s, n, _ in accesses if s >= 0)
            for stream, n, offset in accesses:
                if stream == -1:
                    nbytes = n
                elif stream in line:
                    first, last = offset // PORT_WIDTH, (offset + n - 1) // PORT_WIDTH
                    words = last - first + 1 - (line[stream] == first)
                    line[stream] = last
                    nbytes = words * PORT_WIDTH
                else:
                    continue
                if nbytes > 0:
                    ops.append(_Op("c", sp, compute))
                    compute = 0
                    ops.append(_Op("m", sp, nbytes, ns=stream == -1))
        if compute:
            ops.append(_Op("c", sp, compute))
        if w.cp_write:
            ops.append(_Op("m", cp, w.cp_write))
        return ops

    def _transmit(self, conn: _Conn, outs: list[bytes], new, response_size: int) -> None:
        ops: list[_Op] = []
        if conn.buffer is not None and response_size:
            ops.append(_Op("m", "transport", response_size))
        total = sum(len(f) for f in outs)
        ops.append(_Op("c", "transport", FRAME_OVERHEAD_CYCLES * len(outs) + _link(total)))

        def sent() -> None:
            conn.responses.extend(outs)
            self.trace.tx_bytes += total
            self._marker(conn, outs, new, total)
            self._release(conn)
            conn.start = None
            conn.in_bytes = 0
            self._feed(conn)

        self.submit(self.transport, ops, sent)

    def _marker(self, conn: _Conn, outs: list[bytes], new, total: int) -> None:
        kind = outs[0][:3].decode("ascii", "replace")
        service, status = kind, 0
        works = [p.work for p in new if p.work is not None]
        if kind == "MSG" and works:
            service = works[-1].service.removesuffix("Request")
            status = int(works[-1].status)
        elif kind == "MSG" and new:
            service = "Fault"
        m = RequestMarker(len(self.trace.markers), conn.index, service, conn.start, self.now, conn.in_bytes, total, status)
        self.trace.markers.append(m)


def run_trace(config: EngineConfig, clocks: ClockConfig, capture: Capture) -> SimResult:
    """Replay a capture's inbound records through a fresh engine."""
    sim = Simulator(config, clocks, capture.seed)
    for conn, frames in capture.inbound().items():
        sim.add_connection(conn, frames)
    sim.run_events()
    responses = {c.index: c.responses for c in sim.conns}
    return SimResult(responses, sim.trace, sim.engine)


__all__ = ["BufferBudgetExceeded", "SimResult", "Simulator", "run_trace"]
