"""Length-only scanning of typed values, used by SKIP.

Deliberately independent of the codec decoders: it walks encoding bytes and
length prefixes without building values, so the two can be cross-checked.
"""

from __future__ import annotations

import struct

from .isa import Tag


class ScanOverrun(Exception):
    pass


class ScanMalformed(Exception):
    pass


_FIXED = {
    Tag.bool: 1, Tag.i8: 1, Tag.u8: 1, Tag.i16: 2, Tag.u16: 2,
    Tag.i32: 4, Tag.u32: 4, Tag.f32: 4, Tag.f64: 8, Tag.dt: 8,
}

# Variant type id -> fixed payload size, or a scanner name
_VARIANT_FIXED = {1: 1, 2: 1, 3: 1, 4: 2, 5: 2, 6: 4, 7: 4, 10: 4, 11: 8, 13: 8}
_VARIANT_VAR = {12: Tag.str, 15: Tag.str, 17: Tag.nid, 20: Tag.qn, 21: Tag.lt}


class _Cursor:
    __slots__ = ("buf", "pos", "end", "max_len")

    def __init__(self, buf, pos: int, end: int, max_len: int):
        self.buf, self.pos, self.end, self.max_len = buf, pos, end, max_len

    def need(self, n: int) -> None:
        if self.pos + n > self.end:
            raise ScanOverrun(f"need {n} bytes at {self.pos}")

    def byte(self) -> int:
        self.need(1)
        b = self.buf[self.pos]
        self.pos += 1
        return b

    def advance(self, n: int) -> None:
        self.need(n)
        self.pos += n

    def lstring(self) -> None:
        self.need(4)
        (n,) = struct.unpack_from("<i", self.buf, self.pos)
        self.pos += 4
        if n < -1:
            raise ScanMalformed(f"negative length {n}")
        if n > self.max_len:
            raise ScanMalformed(f"length {n} over limit")
        if n > 0:
            self.advance(n)


def _nodeid(c: _Cursor) -> None:
    form = c.byte()
    if form == 0:
        c.advance(1)
    elif form == 1:
        c.advance(3)
    elif form == 2:
        c.advance(6)
    elif form in (3, 5):
        c.advance(2)
        c.lstring()
    elif form == 4:
        c.advance(18)
    else:
        raise ScanMalformed(f"NodeId form 0x{form:02X}")


def _localized(c: _Cursor) -> None:
    mask = c.byte()
    if mask & ~0x03:
        raise ScanMalformed(f"LocalizedText mask 0x{mask:02X}")
    if mask & 1:
        c.lstring()
    if mask & 2:
        c.lstring()


def _variant(c: _Cursor) -> None:
    vt = c.byte()
    if vt & 0xC0:
        raise ScanMalformed("Variant arrays unsupported")
    if vt == 0:
        return
    if vt in _VARIANT_FIXED:
        c.advance(_VARIANT_FIXED[vt])
    elif vt in _VARIANT_VAR:
        _scan(c, _VARIANT_VAR[vt])
    else:
        raise ScanMalformed(f"Variant type {vt}")


def _datavalue(c: _Cursor) -> None:
    mask = c.byte()
    if mask & ~0x3F:
        raise ScanMalformed(f"DataValue mask 0x{mask:02X}")
    if mask & 0x01:
        _variant(c)
    c.advance((4 if mask & 0x02 else 0) + (8 if mask & 0x04 else 0) + (8 if mask & 0x08 else 0)
              + (2 if mask & 0x10 else 0) + (2 if mask & 0x20 else 0))


def _scan(c: _Cursor, tag: Tag) -> None:
    if tag in _FIXED:
        c.advance(_FIXED[tag])
    elif tag is Tag.str:
        c.lstring()
    elif tag is Tag.nid:
        _nodeid(c)
    elif tag is Tag.lt:
        _localized(c)
    elif tag is Tag.qn:
        c.advance(2)
        c.lstring()
    elif tag is Tag.var:
        _variant(c)
    else:
        _datavalue(c)


def scan_length(buf, pos: int, end: int, tag: Tag, max_len: int = 4096) -> int:
    """Bytes occupied by one value of ``tag`` starting at ``pos``."""
    c = _Cursor(buf, pos, end, max_len)
    _scan(c, Tag(tag))
    return c.pos - pos
