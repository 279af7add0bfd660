"""Capture files: a manifest plus one raw file per frame.

Manifest lines are ``<conn> <in|out> <nbytes> <file>`` in wire order, where
``in`` is client to server. Lines starting with ``#!`` carry ``key=value``
metadata (the engine seed, the endpoint URL); other ``#`` lines are comments.
An ``in`` record is the bytes of one TCP read, so it need not be a whole frame.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST = "manifest.txt"
DIRECTIONS = ("in", "out")


class CaptureMalformed(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    conn: int
    direction: str
    data: bytes


@dataclass
class Capture:
    records: list[Record] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def seed(self) -> bytes | None:
        s = self.meta.get("seed")
        return bytes.fromhex(s) if s else None

    def connections(self) -> list[int]:
        return sorted({r.conn for r in self.records})

    def stream(self, conn: int, direction: str) -> list[bytes]:
        return [r.data for r in self.records if r.conn == conn and r.direction == direction]

    def inbound(self) -> dict[int, list[bytes]]:
        return {c: self.stream(c, "in") for c in self.connections()}

    def outbound(self) -> dict[int, list[bytes]]:
        return {c: self.stream(c, "out") for c in self.connections()}


def read_capture(path: str | os.PathLike) -> Capture:
    root = Path(path)
    manifest = root / MANIFEST
    if not manifest.is_file():
        raise CaptureMalformed(f"{root}: no {MANIFEST}")
    cap = Capture()
    for lineno, raw in enumerate(manifest.read_text().splitlines(), 1):
        line = raw.strip()
        if line.startswith("#!"):
            key, sep, value = line[2:].strip().partition("=")
            if not sep:
                raise CaptureMalformed(f"{manifest}:{lineno}: metadata needs key=value")
            cap.meta[key.strip()] = value.strip()
            continue
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise CaptureMalformed(f"{manifest}:{lineno}: expected 'conn direction nbytes file'")
        conn_s, direction, n_s, name = parts
        if direction not in DIRECTIONS:
            raise CaptureMalformed(f"{manifest}:{lineno}: direction {direction!r}")
        try:
            conn, n = int(conn_s), int(n_s)
        except ValueError:
            raise CaptureMalformed(f"{manifest}:{lineno}: non-numeric field") from None
        frame_path = root / name
        if Path(name).is_absolute() or ".." in Path(name).parts or not frame_path.is_file():
            raise CaptureMalformed(f"{manifest}:{lineno}: missing frame file {name}")
        data = frame_path.read_bytes()
        if len(data) != n:
            raise CaptureMalformed(f"{manifest}:{lineno}: {name} has {len(data)} bytes, manifest says {n}")
        cap.records.append(Record(conn, direction, data))
    return cap


class CaptureWriter:
    """Appends records as they happen; safe to use from one event loop."""

    def __init__(self, path: str | os.PathLike, meta: dict[str, str] | None = None):
        self.root = Path(path)
        self.root.mkdir(parents=True, exist_ok=True)
        self.count = 0
        self._manifest = open(self.root / MANIFEST, "w")
        for k, v in (meta or {}).items():
            self._manifest.write(f"#! {k}={v}\n")
        self._manifest.flush()

    def add(self, conn: int, direction: str, data: bytes) -> None:
        if direction not in DIRECTIONS:
            raise ValueError(direction)
        name = f"{self.count:05d}-{conn}-{direction}.bin"
        (self.root / name).write_bytes(data)
        self._manifest.write(f"{conn} {direction} {len(data)} {name}\n")
        self._manifest.flush()
        self.count += 1

    def close(self) -> None:
        self._manifest.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_capture(path: str | os.PathLike, cap: Capture) -> None:
    with CaptureWriter(path, cap.meta) as w:
        for r in cap.records:
            w.add(r.conn, r.direction, r.data)
