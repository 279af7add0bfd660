"""OPC UA built-in value types used by the Nano subset."""

from __future__ import annotations

import datetime as _dt
import enum
import re
import uuid
from dataclasses import dataclass, field
from typing import Any, Union

from .errors import UnsupportedType

Identifier = Union[int, str, bytes, uuid.UUID]

# 100 ns ticks between 1601-01-01 and 1970-01-01
_EPOCH_DELTA_TICKS = 116444736000000000


def datetime_to_ticks(value: _dt.datetime) -> int:
    if value.tzinfo is None:
        value = value.replace(tzinfo=_dt.timezone.utc)
    delta = value - _dt.datetime(1970, 1, 1, tzinfo=_dt.timezone.utc)
    return _EPOCH_DELTA_TICKS + (delta // _dt.timedelta(microseconds=1)) * 10


def ticks_to_datetime(ticks: int) -> _dt.datetime:
    micros = (ticks - _EPOCH_DELTA_TICKS) // 10
    return _dt.datetime(1970, 1, 1, tzinfo=_dt.timezone.utc) + _dt.timedelta(microseconds=micros)


class NodeIdForm(enum.IntEnum):
    """Wire encoding byte of a NodeId."""

    TWO_BYTE = 0
    FOUR_BYTE = 1
    NUMERIC = 2
    STRING = 3
    GUID = 4
    BYTE_STRING = 5


# Index order of identifier kinds: numeric < string < guid < opaque.
_KIND_RANK = {int: 0, str: 1, uuid.UUID: 2, bytes: 3}

_NODEID_RE = re.compile(r"^(?:ns=(\d+);)?([isgb])=(.*)$", re.S)


@dataclass(frozen=True)
class NodeId:
    namespace: int = 0
    identifier: Identifier = 0

    def __post_init__(self):
        if not 0 <= self.namespace <= 0xFFFF:
            raise ValueError(f"namespace index out of range: {self.namespace}")
        ident = self.identifier
        if isinstance(ident, bool) or not isinstance(ident, (int, str, bytes, uuid.UUID)):
            raise UnsupportedType(f"NodeId identifier of type {type(ident).__name__}")
        if isinstance(ident, int) and not 0 <= ident <= 0xFFFFFFFF:
            raise ValueError(f"numeric identifier out of range: {ident}")

    @property
    def kind_rank(self) -> int:
        return _KIND_RANK[type(self.identifier)]

    @property
    def is_null(self) -> bool:
        return self.namespace == 0 and self.identifier in (0, "", b"")

    def canonical_form(self) -> NodeIdForm:
        """Shortest legal wire form for this identifier."""
        ident = self.identifier
        if isinstance(ident, int):
            if self.namespace == 0 and ident <= 0xFF:
                return NodeIdForm.TWO_BYTE
            if self.namespace <= 0xFF and ident <= 0xFFFF:
                return NodeIdForm.FOUR_BYTE
            return NodeIdForm.NUMERIC
        if isinstance(ident, str):
            return NodeIdForm.STRING
        if isinstance(ident, uuid.UUID):
            return NodeIdForm.GUID
        return NodeIdForm.BYTE_STRING

    def sort_key(self) -> tuple:
        ident = self.identifier
        if isinstance(ident, str):
            ident = ident.encode("utf-8")
        elif isinstance(ident, uuid.UUID):
            ident = ident.bytes_le
        return (self.namespace, self.kind_rank, ident)

    @classmethod
    def parse(cls, text: str) -> NodeId:
        """Parse the usual ``ns=1;i=5`` / ``i=85`` / ``ns=1;s=Name`` notation."""
        m = _NODEID_RE.match(text.strip())
        if not m:
            raise ValueError(f"not a NodeId: {text!r}")
        ns = int(m.group(1) or 0)
        kind, raw = m.group(2), m.group(3)
        if kind == "i":
            return cls(ns, int(raw, 0))
        if kind == "s":
            return cls(ns, raw)
        if kind == "g":
            return cls(ns, uuid.UUID(raw))
        return cls(ns, bytes.fromhex(raw))

    def __str__(self) -> str:
        prefix = f"ns={self.namespace};" if self.namespace else ""
        ident = self.identifier
        if isinstance(ident, int):
            return f"{prefix}i={ident}"
        if isinstance(ident, str):
            return f"{prefix}s={ident}"
        if isinstance(ident, uuid.UUID):
            return f"{prefix}g={ident}"
        return f"{prefix}b={ident.hex()}"


@dataclass(frozen=True)
class QualifiedName:
    namespace: int = 0
    name: str | None = None

    def __str__(self) -> str:
        return f"{self.namespace}:{self.name}" if self.namespace else str(self.name)


@dataclass(frozen=True)
class LocalizedText:
    text: str | None = None
    locale: str | None = None

    @property
    def mask(self) -> int:
        return (0x01 if self.locale is not None else 0) | (0x02 if self.text is not None else 0)


class VariantType(enum.IntEnum):
    Null = 0
    Boolean = 1
    SByte = 2
    Byte = 3
    Int16 = 4
    UInt16 = 5
    Int32 = 6
    UInt32 = 7
    Int64 = 8
    UInt64 = 9
    Float = 10
    Double = 11
    String = 12
    DateTime = 13
    Guid = 14
    ByteString = 15
    XmlElement = 16
    NodeId = 17
    ExpandedNodeId = 18
    StatusCode = 19
    QualifiedName = 20
    LocalizedText = 21
    ExtensionObject = 22
    DataValue = 23
    Variant = 24
    DiagnosticInfo = 25


# Scalar Variant payloads carried by the Nano subset.
SUPPORTED_VARIANT_TYPES = frozenset(
    {
        VariantType.Null,
        VariantType.Boolean,
        VariantType.SByte,
        VariantType.Byte,
        VariantType.Int16,
        VariantType.UInt16,
        VariantType.Int32,
        VariantType.UInt32,
        VariantType.Float,
        VariantType.Double,
        VariantType.String,
        VariantType.DateTime,
        VariantType.ByteString,
        VariantType.NodeId,
        VariantType.QualifiedName,
        VariantType.LocalizedText,
    }
)

_INT_RANGES = {
    VariantType.SByte: (-0x80, 0x7F),
    VariantType.Byte: (0, 0xFF),
    VariantType.Int16: (-0x8000, 0x7FFF),
    VariantType.UInt16: (0, 0xFFFF),
    VariantType.Int32: (-0x80000000, 0x7FFFFFFF),
    VariantType.UInt32: (0, 0xFFFFFFFF),
    VariantType.DateTime: (-(1 << 63), (1 << 63) - 1),
}


@dataclass(frozen=True)
class Variant:
    type: VariantType = VariantType.Null
    value: Any = None

    def __post_init__(self):
        vt = VariantType(self.type)
        object.__setattr__(self, "type", vt)
        if vt not in SUPPORTED_VARIANT_TYPES:
            raise UnsupportedType(f"Variant type {vt.name} is outside the Nano subset")
        if isinstance(self.value, (list, tuple)):
            raise UnsupportedType("Variant arrays are outside the Nano subset")
        _check_scalar(vt, self.value)


def _check_scalar(vt: VariantType, value: Any) -> None:
    ok: bool
    if vt is VariantType.Null:
        ok = value is None
    elif vt is VariantType.Boolean:
        ok = isinstance(value, bool)
    elif vt in _INT_RANGES:
        lo, hi = _INT_RANGES[vt]
        ok = isinstance(value, int) and not isinstance(value, bool) and lo <= value <= hi
    elif vt in (VariantType.Float, VariantType.Double):
        ok = isinstance(value, float)
    elif vt is VariantType.String:
        ok = value is None or isinstance(value, str)
    elif vt is VariantType.ByteString:
        ok = value is None or isinstance(value, bytes)
    elif vt is VariantType.NodeId:
        ok = isinstance(value, NodeId)
    elif vt is VariantType.QualifiedName:
        ok = isinstance(value, QualifiedName)
    else:
        ok = isinstance(value, LocalizedText)
    if not ok:
        raise UnsupportedType(f"{value!r} is not a valid {vt.name} scalar")


@dataclass(frozen=True)
class ExtensionObject:
    """Opaque structure container: type NodeId plus its encoded body."""

    type_id: NodeId = field(default_factory=NodeId)
    body: bytes | None = None
    encoding: int = 0

    def __post_init__(self):
        if self.body is not None and self.encoding == 0:
            object.__setattr__(self, "encoding", 1)


@dataclass(frozen=True)
class DataValue:
    value: Variant | None = None
    status: int | None = None
    source_timestamp: int | None = None
    source_picoseconds: int | None = None
    server_timestamp: int | None = None
    server_picoseconds: int | None = None

    @property
    def mask(self) -> int:
        m = 0
        if self.value is not None:
            m |= 0x01
        if self.status is not None:
            m |= 0x02
        if self.source_timestamp is not None:
            m |= 0x04
        if self.server_timestamp is not None:
            m |= 0x08
        if self.source_picoseconds is not None:
            m |= 0x10
        if self.server_picoseconds is not None:
            m |= 0x20
        return m


@dataclass(frozen=True)
class DiagnosticInfo:
    symbolic_id: int | None = None
    namespace_uri: int | None = None
    localized_text: int | None = None
    locale: int | None = None
    additional_info: str | None = None
    inner_status: int | None = None
    inner: DiagnosticInfo | None = None
