"""Stream bindings of the VM.

s0 request body (read only), s1 response buffer, s2 namespace port,
s3..s15 scratch.  Scratch and port streams are FIFOs that rewind to zero
whenever they drain, so loops do not exhaust their capacity.
"""

from __future__ import annotations

from .isa import NUM_STREAMS

SCRATCH_CAPACITY = 256


class StreamOverrun(Exception):
    pass


class Stream:
    __slots__ = ("buf", "rpos", "capacity", "rewinds", "_snapshot")

    def __init__(self, data: bytes = b"", capacity: int | None = None, rewinds: bool = False):
        self.buf = bytearray(data)
        self.rpos = 0
        self.capacity = len(self.buf) if capacity is None else capacity
        self.rewinds = rewinds
        self._snapshot: bytes | None = None

    @property
    def wpos(self) -> int:
        return len(self.buf)

    @property
    def at_end(self) -> bool:
        return self.rpos == len(self.buf)

    def view(self) -> bytes:
        """Immutable snapshot of the written bytes (cached until the next write)."""
        if self._snapshot is None:
            self._snapshot = bytes(self.buf)
        return self._snapshot

    def consume(self, n: int) -> None:
        self.rpos += n
        if self.rewinds and self.rpos == len(self.buf):
            self.buf.clear()
            self.rpos = 0
            self._snapshot = None

    def can_write(self, n: int) -> bool:
        return len(self.buf) + n <= self.capacity

    def append(self, data: bytes) -> None:
        if not self.can_write(len(data)):
            raise StreamOverrun(f"write of {len(data)} bytes exceeds capacity {self.capacity}")
        self.buf += data
        self._snapshot = None

    def memory_bytes(self) -> int:
        """Backing memory touched beyond the stream itself (namespace port only)."""
        return 0

    def seek(self, pos: int) -> None:
        if not 0 <= pos <= len(self.buf):
            raise StreamOverrun(f"seek to {pos} outside [0, {len(self.buf)}]")
        self.rpos = pos


class PortStream(Stream):
    """Writes go to the namespace port; reads drain its answers."""

    __slots__ = ("port",)

    def __init__(self, port):
        super().__init__(capacity=1 << 30, rewinds=True)
        self.port = port

    def memory_bytes(self) -> int:
        probe = getattr(self.port, "memory_bytes", None)
        return probe() if probe else 0

    def append(self, data: bytes) -> None:
        answer = self.port.write(data)
        if answer:
            self.buf += answer
            self._snapshot = None


def make_streams(request: bytes, response_capacity: int, port) -> list[Stream]:
    streams = [Stream(request), Stream(capacity=response_capacity), PortStream(port)]
    streams += [Stream(capacity=SCRATCH_CAPACITY, rewinds=True) for _ in range(3, NUM_STREAMS)]
    return streams
