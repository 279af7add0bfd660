"""Service programs and their ``UAVM`` image format.

Image layout (little-endian): ``"UAVM"``, u16 version, u16 entry count,
entry count x (u32 service type id, u32 code offset), u32 code length, code.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

MAGIC = b"UAVM"
VERSION = 1


class ProgramFormatError(Exception):
    pass


@dataclass
class VmProgram:
    name: str
    code: bytes
    entry_points: dict[int, int] = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        out = bytearray(MAGIC + struct.pack("<HH", VERSION, len(self.entry_points)))
        for service, offset in sorted(self.entry_points.items()):
            out += struct.pack("<II", service, offset)
        out += struct.pack("<I", len(self.code)) + self.code
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes, name: str = "image") -> VmProgram:
        if len(data) < 8 or data[:4] != MAGIC:
            raise ProgramFormatError("bad magic")
        version, count = struct.unpack_from("<HH", data, 4)
        if version != VERSION:
            raise ProgramFormatError(f"unsupported version {version}")
        pos = 8
        entries = {}
        for _ in range(count):
            if pos + 8 > len(data):
                raise ProgramFormatError("truncated entry table")
            service, offset = struct.unpack_from("<II", data, pos)
            entries[service] = offset
            pos += 8
        if pos + 4 > len(data):
            raise ProgramFormatError("missing code length")
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + n != len(data):
            raise ProgramFormatError(f"code length {n} does not match image size")
        code = bytes(data[pos:])
        for service, offset in entries.items():
            if offset >= n:
                raise ProgramFormatError(f"entry point {offset} for service {service} outside code")
        return cls(name, code, entries)

    def merged(self, other: VmProgram, name: str | None = None) -> VmProgram:
        """Concatenate two programs; branches are relative so code is unchanged."""
        base = len(self.code)
        entries = dict(self.entry_points)
        for service, offset in other.entry_points.items():
            if service in entries:
                raise ProgramFormatError(f"service {service} defined twice")
            entries[service] = base + offset
        return VmProgram(name or f"{self.name}+{other.name}", self.code + other.code, entries)
