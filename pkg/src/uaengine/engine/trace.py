"""Cycle traces: unit state segments, memory grants and request markers.

Time is kept internally in ticks of the common clock base (see ClockConfig).
Everything reported to users is in memory cycles: a unit's state in cycle
``c`` is its state at tick ``c * ticks_per_mem``.
"""

from __future__ import annotations

import bisect
import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import TextIO

from .clocks import ClockConfig

ACTIVE, STALLED, IDLE = "active", "stalled", "idle"


class NoSuchRequest(LookupError):
    pass


class EmptyWindow(ValueError):
    pass


@dataclass(frozen=True)
class RequestMarker:
    index: int
    conn: int
    service: str
    start: int  # tick the first request byte entered the transport
    end: int  # tick the last response byte left it
    request_bytes: int
    response_bytes: int
    status: int = 0


@dataclass
class CycleTrace:
    clocks: ClockConfig
    units: list[str]
    segments: dict[str, list[tuple[int, int, str]]] = field(default_factory=dict)
    grants: list[tuple[int, int, str]] = field(default_factory=list)  # (mem cycle, requester, unit)
    markers: list[RequestMarker] = field(default_factory=list)
    end_tick: int = 0
    tx_bytes: int = 0
    buffer_peak: int = 0

    def __post_init__(self):
        for u in self.units:
            self.segments.setdefault(u, [])

    # --- recording ---------------------------------------------------------

    def mark(self, unit: str, start: int, end: int, state: str) -> None:
        if end <= start:
            return
        segs = self.segments[unit]
        if segs:
            ps, pe, pst = segs[-1]
            if start < pe:
                raise ValueError(f"{unit}: overlapping segment at tick {start}")
            if pe == start and pst == state:
                segs[-1] = (ps, end, state)
                self.end_tick = max(self.end_tick, end)
                return
        segs.append((start, end, state))
        self.end_tick = max(self.end_tick, end)

    # --- queries -----------------------------------------------------------

    @property
    def cycles(self) -> int:
        """Length of the trace in memory cycles."""
        return -(-self.end_tick // self.clocks.ticks_per_mem)

    def latency(self, index: int) -> float:
        """Memory cycles from first request byte in to last response byte out."""
        if not 0 <= index < len(self.markers):
            raise NoSuchRequest(f"request {index} (trace has {len(self.markers)})")
        m = self.markers[index]
        return self.clocks.mem_cycles(m.end - m.start)

    def window(self, index: int) -> tuple[int, int]:
        """Cycle range covered by a request marker."""
        if not 0 <= index < len(self.markers):
            raise NoSuchRequest(f"request {index} (trace has {len(self.markers)})")
        m = self.markers[index]
        tpm = self.clocks.ticks_per_mem
        return -(-m.start // tpm), -(-m.end // tpm)

    def requests(self, service: str) -> list[int]:
        return [m.index for m in self.markers if m.service == service]

    def _count(self, unit: str, state: str, c0: int, c1: int) -> int:
        tpm = self.clocks.ticks_per_mem
        n = 0
        for s, e, st in self.segments[unit]:
            if st != state:
                continue
            lo = max(-(-s // tpm), c0)
            hi = min(-(-e // tpm), c1)
            if hi > lo:
                n += hi - lo
        return n

    def activity(self, window: tuple[int, int]) -> float:
        """Active unit-cycles over total unit-cycles in ``[c0, c1)``."""
        c0, c1 = window
        if c1 <= c0 or c0 < 0 or c1 > self.cycles:
            raise EmptyWindow(f"window [{c0}, {c1}) in a {self.cycles}-cycle trace")
        active = sum(self._count(u, ACTIVE, c0, c1) for u in self.units)
        return active / (len(self.units) * (c1 - c0))

    def unit_activity(self, window: tuple[int, int]) -> dict[str, float]:
        c0, c1 = window
        if c1 <= c0:
            raise EmptyWindow(f"window [{c0}, {c1})")
        return {u: self._count(u, ACTIVE, c0, c1) / (c1 - c0) for u in self.units}

    def state_at(self, unit: str, cycle: int) -> str:
        tick = cycle * self.clocks.ticks_per_mem
        segs = self.segments[unit]
        i = bisect.bisect_right(segs, (tick, float("inf"), "")) - 1
        if i >= 0:
            s, e, st = segs[i]
            if s <= tick < e:
                return st
        return IDLE

    # --- serialization --------------------------------------------------------

    def canonical(self) -> bytes:
        doc = {
            "clocks": asdict(self.clocks),
            "units": self.units,
            "segments": {u: self.segments[u] for u in self.units},
            "grants": self.grants,
            "markers": [asdict(m) for m in self.markers],
            "end": self.end_tick,
            "tx_bytes": self.tx_bytes,
            "buffer_peak": self.buffer_peak,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    def hash(self) -> str:
        return hashlib.sha256(self.canonical()).hexdigest()

    def export(self, out: TextIO, window: tuple[int, int] | None = None) -> None:
        """Dense records ``cycle unit state [grant=R]`` then a key=value summary."""
        c0, c1 = window if window is not None else (0, self.cycles)
        granted = {(c, unit): r for c, r, unit in self.grants if c0 <= c < c1}
        cursors = {u: 0 for u in self.units}
        tpm = self.clocks.ticks_per_mem
        for c in range(c0, c1):
            tick = c * tpm
            for u in self.units:
                segs = self.segments[u]
                i = cursors[u]
                while i < len(segs) and segs[i][1] <= tick:
                    i += 1
                cursors[u] = i
                state = segs[i][2] if i < len(segs) and segs[i][0] <= tick else IDLE
                g = granted.get((c, u))
                out.write(f"{c} {u} {state}" + (f" grant={g}" if g is not None else "") + "\n")
        self.write_summary(out)

    def write_summary(self, out: TextIO) -> None:
        out.write("# summary\n")
        out.write(f"engine_freq={self.clocks.engine_freq}\n")
        out.write(f"mem_freq={self.clocks.mem_freq}\n")
        out.write(f"cycles={self.cycles}\n")
        out.write(f"requests={len(self.markers)}\n")
        out.write(f"tx_bytes={self.tx_bytes}\n")
        out.write(f"buffer_peak={self.buffer_peak}\n")
        out.write(f"trace_hash={self.hash()}\n")
        for m in self.markers:
            out.write(f"latency.{m.index}={self.latency(m.index):.2f} service={m.service} conn={m.conn}\n")
        for m in self.markers:
            w = self.window(m.index)
            if w[1] > w[0]:
                out.write(f"activity.{m.index}={self.activity(w):.4f}\n")


def parse_summary(text: str) -> dict[str, str]:
    """The key=value summary block of an export, first token of each line."""
    lines = text.splitlines()
    try:
        start = lines.index("# summary") + 1
    except ValueError:
        return {}
    out = {}
    for line in lines[start:]:
        key, _, rest = line.partition("=")
        out[key] = rest.split()[0] if rest else ""
    return out
