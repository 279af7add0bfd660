"""Instruction set of the stream processor.

The first byte fixes the instruction length::

    00 HALT                      1
    01 RET                       1
    02 BR    off16               3
    03 CALL  off16               3
    04 BRC   cond off16          4   cond = c<<4 | stream (stream only for EOS/NEOS)
    05 TRAP  code                2
    06 MKIDX s<<4|x              2   x[x] := read cursor of s
    07 SEEK  s<<4|x              2   read cursor of s := x[x]
    1T COPY.T  src<<4|dst        2
    2T SKIP.T  s<<4              2
    3T CMP.T   a<<4|b            2   consumes one value from each stream
    4T EMIT.T  s<<4              2   writes the null/zero value of T
    5T LDI.T   s<<4 imm32        6   writes a typed immediate (scalar T only)

T is a type tag nibble.  Every other first byte is illegal.  Branch offsets
are signed and relative to the next instruction.  Operand bits that carry
no meaning must be zero, so each program has exactly one listing.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass


class Op(enum.IntEnum):
    HALT = 0x00
    RET = 0x01
    BR = 0x02
    CALL = 0x03
    BRC = 0x04
    TRAP = 0x05
    MKIDX = 0x06
    SEEK = 0x07
    COPY = 0x10
    SKIP = 0x20
    CMP = 0x30
    EMIT = 0x40
    LDI = 0x50


TYPED_OPS = (Op.COPY, Op.SKIP, Op.CMP, Op.EMIT, Op.LDI)


class Tag(enum.IntEnum):
    bool = 0
    i8 = 1
    u8 = 2
    i16 = 3
    u16 = 4
    i32 = 5
    u32 = 6
    f32 = 7
    f64 = 8
    str = 9
    nid = 10
    lt = 11
    qn = 12
    var = 13
    dv = 14
    dt = 15


# codec type name carried by each tag
TAG_TYPES = {
    Tag.bool: "Boolean",
    Tag.i8: "SByte",
    Tag.u8: "Byte",
    Tag.i16: "Int16",
    Tag.u16: "UInt16",
    Tag.i32: "Int32",
    Tag.u32: "UInt32",
    Tag.f32: "Float",
    Tag.f64: "Double",
    Tag.str: "String",
    Tag.nid: "NodeId",
    Tag.lt: "LocalizedText",
    Tag.qn: "QualifiedName",
    Tag.var: "Variant",
    Tag.dv: "DataValue",
    Tag.dt: "DateTime",
}

# Immediate ranges for LDI; f32 immediates are raw IEEE bits.
LDI_RANGES = {
    Tag.bool: (0, 1),
    Tag.i8: (-0x80, 0x7F),
    Tag.u8: (0, 0xFF),
    Tag.i16: (-0x8000, 0x7FFF),
    Tag.u16: (0, 0xFFFF),
    Tag.i32: (-0x80000000, 0x7FFFFFFF),
    Tag.u32: (0, 0xFFFFFFFF),
    Tag.f32: (0, 0xFFFFFFFF),
    Tag.dt: (-0x80000000, 0x7FFFFFFF),
}
SIGNED_IMM = frozenset({Tag.i8, Tag.i16, Tag.i32, Tag.dt})


class Cond(enum.IntEnum):
    EQ = 0
    NE = 1
    LT = 2
    GE = 3
    GT = 4
    LE = 5
    EOS = 6
    NEOS = 7


STREAM_CONDS = (Cond.EOS, Cond.NEOS)
NUM_STREAMS = 16
NUM_INDEX = 8


class IllegalOpcode(Exception):
    def __init__(self, offset: int, detail: str = ""):
        super().__init__(f"IllegalOpcode@{offset}" + (f": {detail}" if detail else ""))
        self.offset = offset


def _build_lengths() -> list[int]:
    lengths = [0] * 256
    lengths[Op.HALT] = lengths[Op.RET] = 1
    lengths[Op.BR] = lengths[Op.CALL] = 3
    lengths[Op.BRC] = 4
    lengths[Op.TRAP] = lengths[Op.MKIDX] = lengths[Op.SEEK] = 2
    for tag in Tag:
        for op in (Op.COPY, Op.SKIP, Op.CMP, Op.EMIT):
            lengths[op | tag] = 2
        if tag in LDI_RANGES:
            lengths[Op.LDI | tag] = 6
    return lengths


LENGTHS = _build_lengths()


@dataclass(frozen=True)
class Instruction:
    op: Op
    tag: Tag | None = None
    a: int = 0  # first stream / condition / trap code
    b: int = 0  # second stream / index register / condition stream
    imm: int = 0  # branch offset or LDI immediate
    length: int = 1

    def encode(self) -> bytes:
        op = self.op
        if op in (Op.HALT, Op.RET):
            return bytes([op])
        if op in (Op.BR, Op.CALL):
            return bytes([op]) + struct.pack("<h", self.imm)
        if op is Op.BRC:
            return bytes([op, self.a << 4 | self.b]) + struct.pack("<h", self.imm)
        if op is Op.TRAP:
            return bytes([op, self.a])
        if op in (Op.MKIDX, Op.SEEK, Op.COPY, Op.CMP):
            head = op if op in (Op.MKIDX, Op.SEEK) else op | self.tag
            return bytes([head, self.a << 4 | self.b])
        if op in (Op.SKIP, Op.EMIT):
            return bytes([op | self.tag, self.a << 4])
        fmt = "<i" if self.tag in SIGNED_IMM else "<I"
        return bytes([op | self.tag, self.a << 4]) + struct.pack(fmt, self.imm)


def decode(code: bytes, pc: int) -> Instruction:
    """Decode the instruction at ``pc``; raises IllegalOpcode."""
    if not 0 <= pc < len(code):
        raise IllegalOpcode(pc, "pc outside code")
    first = code[pc]
    length = LENGTHS[first]
    if length == 0:
        raise IllegalOpcode(pc, f"unassigned opcode 0x{first:02X}")
    if pc + length > len(code):
        raise IllegalOpcode(pc, "truncated instruction")
    body = code[pc + 1:pc + length]
    if first < 0x10:
        op = Op(first)
        if length == 1:
            return Instruction(op, length=1)
        if op in (Op.BR, Op.CALL):
            return Instruction(op, imm=struct.unpack("<h", body)[0], length=3)
        if op is Op.BRC:
            cond, stream = body[0] >> 4, body[0] & 0x0F
            if cond > Cond.NEOS or (cond not in STREAM_CONDS and stream):
                raise IllegalOpcode(pc, f"bad condition byte 0x{body[0]:02X}")
            return Instruction(op, a=cond, b=stream, imm=struct.unpack("<h", body[1:])[0], length=4)
        if op is Op.TRAP:
            return Instruction(op, a=body[0], length=2)
        s, x = body[0] >> 4, body[0] & 0x0F
        if x >= NUM_INDEX:
            raise IllegalOpcode(pc, f"index register {x} out of range")
        return Instruction(op, a=s, b=x, length=2)
    op = Op(first & 0xF0)
    tag = Tag(first & 0x0F)
    hi, lo = body[0] >> 4, body[0] & 0x0F
    if op in (Op.COPY, Op.CMP):
        return Instruction(op, tag, hi, lo, length=2)
    if lo:
        raise IllegalOpcode(pc, "nonzero reserved operand bits")
    if op is not Op.LDI:
        return Instruction(op, tag, hi, length=2)
    fmt = "<i" if tag in SIGNED_IMM else "<I"
    imm = struct.unpack(fmt, body[1:])[0]
    lo_lim, hi_lim = LDI_RANGES[tag]
    if not lo_lim <= imm <= hi_lim:
        raise IllegalOpcode(pc, f"immediate {imm} out of range for {tag.name}")
    return Instruction(op, tag, hi, imm=imm, length=6)


def iter_instructions(code: bytes):
    pc = 0
    while pc < len(code):
        ins = decode(code, pc)
        yield pc, ins
        pc += ins.length
