"""Replay a capture through a fresh engine and compare responses field by field."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any

from ..codec import CodecError, ServiceMessage, decode_message, mask_volatile_fields
from ..engine.capture import Capture, read_capture
from ..engine.clocks import ClockConfig
from ..engine.sim import run_trace
from ..s3 import EngineConfig
from ..transport import TransportError, decode_acknowledge, decode_chunk, decode_error, read_header

_CHUNK_FIELDS = ("chunk_flag", "secure_channel_id", "sequence_number", "request_id", "token_id")


@dataclass(frozen=True)
class Divergence:
    conn: int
    exchange: int  # index of the response message on that connection
    field: str
    expected: Any = None
    actual: Any = None

    def __str__(self) -> str:
        return f"conn {self.conn} exchange {self.exchange}: {self.field}: expected {self.expected!r}, got {self.actual!r}"


@dataclass
class ReplayReport:
    exchanges: int = 0
    divergences: list[Divergence] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.divergences

    def render(self) -> str:
        lines = [f"exchanges={self.exchanges} divergences={len(self.divergences)} result={'pass' if self.passed else 'fail'}"]
        lines += [str(d) for d in self.divergences]
        return "\n".join(lines)


def split_frames(data: bytes) -> list[bytes]:
    """Cut a byte stream at frame boundaries; a trailing partial frame is kept whole."""
    frames, pos = [], 0
    while pos < len(data):
        try:
            _, _, size = read_header(data[pos:])
        except TransportError:
            frames.append(data[pos:])
            break
        frames.append(data[pos : pos + size])
        pos += size
    return frames


def group_messages(frames: list[bytes]) -> list[list[bytes]]:
    """Group chunk frames into messages: intermediate chunks join the next final one."""
    out: list[list[bytes]] = []
    cur: list[bytes] = []
    for f in frames:
        cur.append(f)
        if not (f[:3] == b"MSG" and f[3:4] == b"C"):
            out.append(cur)
            cur = []
    if cur:
        out.append(cur)
    return out


def diff_values(expected: Any, actual: Any, path: str = "") -> tuple[str, Any, Any] | None:
    """First differing leaf as (path, expected, actual), or None."""
    if isinstance(expected, ServiceMessage) and isinstance(actual, ServiceMessage):
        if expected.name != actual.name:
            return (path or "type", expected.name, actual.name)
        return diff_values(expected.fields, actual.fields, path)
    if isinstance(expected, dict) and isinstance(actual, dict):
        for k in list(expected) + [k for k in actual if k not in expected]:
            if k not in expected or k not in actual:
                return (_join(path, k), expected.get(k), actual.get(k))
            d = diff_values(expected[k], actual[k], _join(path, k))
            if d:
                return d
        return None
    if isinstance(expected, list) and isinstance(actual, list):
        if len(expected) != len(actual):
            return (f"{path}.length" if path else "length", len(expected), len(actual))
        for i, (a, b) in enumerate(zip(expected, actual)):
            d = diff_values(a, b, f"{path}[{i}]")
            if d:
                return d
        return None
    if dataclasses.is_dataclass(expected) and type(expected) is type(actual):
        for f in dataclasses.fields(expected):
            d = diff_values(getattr(expected, f.name), getattr(actual, f.name), _join(path, f.name))
            if d:
                return d
        return None
    return None if expected == actual else (path or "value", expected, actual)


def _join(path: str, name: str) -> str:
    return f"{path}.{name}" if path else str(name)


def _decode_body(body: bytes) -> ServiceMessage | None:
    try:
        return mask_volatile_fields(decode_message(body))
    except CodecError:
        return None


def compare_message(expected: list[bytes], actual: list[bytes]) -> tuple[str, Any, Any] | None:
    """First divergence between two responses, each a list of chunk frames."""
    et, at = expected[0][:3], actual[0][:3]
    if et != at:
        return ("message_type", et.decode("latin-1"), at.decode("latin-1"))
    try:
        if et == b"ACK":
            return diff_values(decode_acknowledge(expected[0][8:]), decode_acknowledge(actual[0][8:]), "Acknowledge")
        if et == b"ERR":
            e, a = decode_error(expected[0][8:]), decode_error(actual[0][8:])
            return diff_values({"status": e[0], "reason": e[1]}, {"status": a[0], "reason": a[1]}, "Error")
        if len(expected) != len(actual):
            return ("chunk_count", len(expected), len(actual))
        ec = [decode_chunk(f) for f in expected]
        ac = [decode_chunk(f) for f in actual]
    except TransportError:
        return None if b"".join(expected) == b"".join(actual) else ("frame", b"".join(expected).hex(), b"".join(actual).hex())
    for i, (e, a) in enumerate(zip(ec, ac)):
        for name in _CHUNK_FIELDS:
            if getattr(e, name) != getattr(a, name):
                return (f"chunk[{i}].{name}", getattr(e, name), getattr(a, name))
        d = diff_values(e.security, a.security, f"chunk[{i}].security")
        if d:
            return d
    eb = b"".join(c.body for c in ec)
    ab = b"".join(c.body for c in ac)
    em, am = _decode_body(eb), _decode_body(ab)
    if em is None or am is None:
        if eb == ab:
            return None
        return ("body", "undecodable" if em is None else em.name, "undecodable" if am is None else am.name)
    return diff_values(em, am)


def compare_responses(conn: int, expected: list[bytes], actual: list[bytes]) -> tuple[int, list[Divergence]]:
    em = group_messages(split_frames(b"".join(expected)))
    am = group_messages(split_frames(b"".join(actual)))
    out = []
    for i in range(max(len(em), len(am))):
        if i >= len(em) or i >= len(am):
            out.append(Divergence(conn, i, "missing", "response" if i < len(em) else None, "response" if i < len(am) else None))
            continue
        d = compare_message(em[i], am[i])
        if d:
            out.append(Divergence(conn, i, *d))
    return len(em), out


def engine_config_for(cap: Capture, base: EngineConfig | None = None) -> EngineConfig:
    cfg = base or EngineConfig()
    url = cap.meta.get("endpoint_url")
    return dataclasses.replace(cfg, endpoint_url=url) if url else cfg


def replay(
    capture: Capture | str | os.PathLike,
    config: EngineConfig | None = None,
    clocks: ClockConfig | None = None,
) -> ReplayReport:
    """Feed the recorded requests to a fresh engine; report the first divergence per exchange."""
    cap = capture if isinstance(capture, Capture) else read_capture(capture)
    result = run_trace(engine_config_for(cap, config), clocks or ClockConfig(), cap)
    report = ReplayReport()
    recorded = cap.outbound()
    for conn in cap.connections():
        n, divs = compare_responses(conn, recorded.get(conn, []), result.responses.get(conn, []))
        report.exchanges += n
        report.divergences += divs
    return report
