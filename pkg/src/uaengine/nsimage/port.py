"""Namespace interface as seen by the stream VM (stream 2).

The VM writes a command, the port answers on the same stream::

    0x01 READ   NodeId, u32 attributeId, u32 timestampsToReturn -> DataValue
    0x02 WRITE  NodeId, u32 attributeId, DataValue             -> u32 StatusCode
    0x03 CLOCK                                                 -> DateTime
"""

from __future__ import annotations

import struct
from typing import Callable

from ..codec import CodecError, DataValue, Reader, StatusCode, Truncated, encode_value
from ..codec.binary import read_datavalue, read_nodeid
from .image import Attr, NamespaceImage

CMD_READ = 0x01
CMD_WRITE = 0x02
CMD_CLOCK = 0x03

TS_SOURCE, TS_SERVER, TS_BOTH, TS_NEITHER = range(4)

_U32 = struct.Struct("<I")


class PortError(Exception):
    """A malformed command; the VM reports it as a type mismatch."""


class NamespacePort:
    def __init__(self, image: NamespaceImage, clock: Callable[[], int], lock=None):
        self.image = image
        self.clock = clock
        self.lock = lock
        self.pending = bytearray()

    def memory_bytes(self) -> int:
        return self.image.bytes_touched

    def reset(self) -> None:
        self.pending.clear()

    def write(self, data: bytes) -> bytes:
        """Accept command bytes; return any response bytes now complete."""
        self.pending += data
        out = bytearray()
        while self.pending:
            try:
                consumed, response = self._execute(bytes(self.pending))
            except Truncated:
                break
            del self.pending[:consumed]
            out += response
        return bytes(out)

    def _execute(self, buf: bytes) -> tuple[int, bytes]:
        r = Reader(buf)
        cmd = r.take(1)[0]
        try:
            if cmd == CMD_CLOCK:
                return r.pos, struct.pack("<q", self.clock())
            if cmd == CMD_READ:
                nid = read_nodeid(r)
                attr = r.unpack(_U32)
                ttr = r.unpack(_U32)
                return r.pos, encode_value(self._locked(self.read, nid, attr, ttr))
            if cmd == CMD_WRITE:
                nid = read_nodeid(r)
                attr = r.unpack(_U32)
                dv = read_datavalue(r)
                return r.pos, _U32.pack(self._locked(self.write_value, nid, attr, dv))
        except Truncated:
            raise
        except CodecError as exc:
            raise PortError(f"malformed port command: {exc}") from None
        raise PortError(f"unknown port command 0x{cmd:02X}")

    def _locked(self, fn, *args):
        if self.lock is None:
            return fn(*args)
        with self.lock:
            return fn(*args)

    def read(self, nid, attr: int, ttr: int) -> DataValue:
        value, status = self.image.read_attribute(nid, attr)
        if status != StatusCode.Good:
            return DataValue(None, int(status))
        now = self.clock()
        src = now if attr == Attr.Value and ttr in (TS_SOURCE, TS_BOTH) else None
        srv = now if ttr in (TS_SERVER, TS_BOTH) else None
        return DataValue(value, None, src, None, srv)

    def write_value(self, nid, attr: int, dv: DataValue) -> int:
        # status and timestamps supplied by the client are ignored
        return int(self.image.write_value(nid, dv.value, attr))
