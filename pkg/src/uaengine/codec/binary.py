"""Little-endian OPC UA binary encoding of built-in types."""

from __future__ import annotations

import struct
import uuid
from dataclasses import dataclass
from typing import Any, Callable

from .errors import LimitExceeded, MalformedEncoding, Truncated, UnsupportedType
from .types import (
    DataValue,
    DiagnosticInfo,
    ExtensionObject,
    LocalizedText,
    NodeId,
    NodeIdForm,
    QualifiedName,
    SUPPORTED_VARIANT_TYPES,
    Variant,
    VariantType,
)


@dataclass(frozen=True)
class Limits:
    max_string_length: int = 4096
    max_array_length: int = 4096
    max_depth: int = 8


DEFAULT_LIMITS = Limits()

_U8 = struct.Struct("<B")
_I8 = struct.Struct("<b")
_U16 = struct.Struct("<H")
_I16 = struct.Struct("<h")
_U32 = struct.Struct("<I")
_I32 = struct.Struct("<i")
_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")
_F32 = struct.Struct("<f")
_F64 = struct.Struct("<d")


class Reader:
    """Bounds-checked cursor over an input buffer."""

    __slots__ = ("data", "pos", "limits", "depth")

    def __init__(self, data: bytes, pos: int = 0, limits: Limits = DEFAULT_LIMITS):
        self.data = data if isinstance(data, (bytes, bytearray, memoryview)) else bytes(data)
        self.pos = pos
        self.limits = limits
        self.depth = 0

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if n < 0 or end > len(self.data):
            raise Truncated(f"need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        chunk = bytes(self.data[self.pos:end])
        self.pos = end
        return chunk

    def unpack(self, st: struct.Struct):
        end = self.pos + st.size
        if end > len(self.data):
            raise Truncated(f"need {st.size} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        (value,) = st.unpack_from(self.data, self.pos)
        self.pos = end
        return value

    def length_prefix(self, limit: int) -> int:
        n = self.unpack(_I32)
        if n < -1:
            raise MalformedEncoding(f"negative length {n}")
        if n > limit:
            raise LimitExceeded(f"declared length {n} exceeds limit {limit}")
        return n


# --- decoders -------------------------------------------------------------


def read_boolean(r: Reader) -> bool:
    return r.unpack(_U8) != 0


def read_string(r: Reader) -> str | None:
    n = r.length_prefix(r.limits.max_string_length)
    if n == -1:
        return None
    raw = r.take(n)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedEncoding(f"invalid UTF-8 in string: {exc}") from None


def read_bytestring(r: Reader) -> bytes | None:
    n = r.length_prefix(r.limits.max_string_length)
    return None if n == -1 else r.take(n)


def read_guid(r: Reader) -> uuid.UUID:
    return uuid.UUID(bytes_le=r.take(16))


def read_nodeid(r: Reader) -> NodeId:
    form = r.unpack(_U8)
    if form == NodeIdForm.TWO_BYTE:
        return NodeId(0, r.unpack(_U8))
    if form == NodeIdForm.FOUR_BYTE:
        ns = r.unpack(_U8)
        return NodeId(ns, r.unpack(_U16))
    if form == NodeIdForm.NUMERIC:
        ns = r.unpack(_U16)
        return NodeId(ns, r.unpack(_U32))
    if form == NodeIdForm.STRING:
        ns = r.unpack(_U16)
        s = read_string(r)
        return NodeId(ns, "" if s is None else s)
    if form == NodeIdForm.GUID:
        ns = r.unpack(_U16)
        return NodeId(ns, read_guid(r))
    if form == NodeIdForm.BYTE_STRING:
        ns = r.unpack(_U16)
        b = read_bytestring(r)
        return NodeId(ns, b"" if b is None else b)
    raise MalformedEncoding(f"unknown NodeId encoding byte 0x{form:02X}")


def read_qualifiedname(r: Reader) -> QualifiedName:
    ns = r.unpack(_U16)
    return QualifiedName(ns, read_string(r))


def read_localizedtext(r: Reader) -> LocalizedText:
    mask = r.unpack(_U8)
    if mask & ~0x03:
        raise MalformedEncoding(f"LocalizedText mask 0x{mask:02X}")
    locale = read_string(r) if mask & 0x01 else None
    text = read_string(r) if mask & 0x02 else None
    return LocalizedText(text=text, locale=locale)


def read_extensionobject(r: Reader) -> ExtensionObject:
    type_id = read_nodeid(r)
    enc = r.unpack(_U8)
    if enc == 0:
        return ExtensionObject(type_id)
    if enc in (1, 2):
        return ExtensionObject(type_id, read_bytestring(r), enc)
    raise MalformedEncoding(f"ExtensionObject encoding 0x{enc:02X}")


def read_variant(r: Reader) -> Variant:
    enc = r.unpack(_U8)
    if enc & 0xC0:
        raise UnsupportedType("Variant arrays are outside the Nano subset")
    try:
        vt = VariantType(enc & 0x3F)
    except ValueError:
        raise MalformedEncoding(f"unknown Variant type id {enc & 0x3F}") from None
    if vt not in SUPPORTED_VARIANT_TYPES:
        raise UnsupportedType(f"Variant type {vt.name} is outside the Nano subset")
    if vt is VariantType.Null:
        return Variant()
    return Variant(vt, _SCALAR_READERS[vt](r))


def read_datavalue(r: Reader) -> DataValue:
    mask = r.unpack(_U8)
    if mask & ~0x3F:
        raise MalformedEncoding(f"DataValue mask 0x{mask:02X}")
    value = read_variant(r) if mask & 0x01 else None
    status = r.unpack(_U32) if mask & 0x02 else None
    src_ts = r.unpack(_I64) if mask & 0x04 else None
    src_ps = r.unpack(_U16) if mask & 0x10 else None
    srv_ts = r.unpack(_I64) if mask & 0x08 else None
    srv_ps = r.unpack(_U16) if mask & 0x20 else None
    return DataValue(value, status, src_ts, src_ps, srv_ts, srv_ps)


def read_diagnosticinfo(r: Reader) -> DiagnosticInfo:
    mask = r.unpack(_U8)
    if mask & 0x80:
        raise MalformedEncoding(f"DiagnosticInfo mask 0x{mask:02X}")
    symbolic = r.unpack(_I32) if mask & 0x01 else None
    ns_uri = r.unpack(_I32) if mask & 0x02 else None
    locale = r.unpack(_I32) if mask & 0x08 else None
    text = r.unpack(_I32) if mask & 0x04 else None
    info = read_string(r) if mask & 0x10 else None
    inner_status = r.unpack(_U32) if mask & 0x20 else None
    inner = None
    if mask & 0x40:
        if r.depth >= r.limits.max_depth:
            raise LimitExceeded("DiagnosticInfo nesting too deep")
        r.depth += 1
        try:
            inner = read_diagnosticinfo(r)
        finally:
            r.depth -= 1
    return DiagnosticInfo(symbolic, ns_uri, text, locale, info, inner_status, inner)


def _scalar(st: struct.Struct) -> Callable[[Reader], Any]:
    return lambda r: r.unpack(st)


_SCALAR_READERS: dict[VariantType, Callable[[Reader], Any]] = {
    VariantType.Boolean: read_boolean,
    VariantType.SByte: _scalar(_I8),
    VariantType.Byte: _scalar(_U8),
    VariantType.Int16: _scalar(_I16),
    VariantType.UInt16: _scalar(_U16),
    VariantType.Int32: _scalar(_I32),
    VariantType.UInt32: _scalar(_U32),
    VariantType.Float: _scalar(_F32),
    VariantType.Double: _scalar(_F64),
    VariantType.String: read_string,
    VariantType.DateTime: _scalar(_I64),
    VariantType.ByteString: read_bytestring,
    VariantType.NodeId: read_nodeid,
    VariantType.QualifiedName: read_qualifiedname,
    VariantType.LocalizedText: read_localizedtext,
}

READERS: dict[str, Callable[[Reader], Any]] = {
    "Boolean": read_boolean,
    "SByte": _scalar(_I8),
    "Byte": _scalar(_U8),
    "Int16": _scalar(_I16),
    "UInt16": _scalar(_U16),
    "Int32": _scalar(_I32),
    "UInt32": _scalar(_U32),
    "Int64": _scalar(_I64),
    "UInt64": _scalar(_U64),
    "Float": _scalar(_F32),
    "Double": _scalar(_F64),
    "String": read_string,
    "DateTime": _scalar(_I64),
    "Guid": read_guid,
    "ByteString": read_bytestring,
    "NodeId": read_nodeid,
    "StatusCode": _scalar(_U32),
    "QualifiedName": read_qualifiedname,
    "LocalizedText": read_localizedtext,
    "ExtensionObject": read_extensionobject,
    "DataValue": read_datavalue,
    "Variant": read_variant,
    "DiagnosticInfo": read_diagnosticinfo,
}


# --- encoders -------------------------------------------------------------


def _pack(st: struct.Struct, kind: str) -> Callable[[bytearray, Any], None]:
    def write(buf: bytearray, value: Any) -> None:
        if isinstance(value, bool) and kind != "Boolean":
            raise UnsupportedType(f"bool given for {kind}")
        try:
            buf += st.pack(value)
        except (struct.error, TypeError, OverflowError) as exc:
            raise UnsupportedType(f"{value!r} is not encodable as {kind}: {exc}") from None

    return write


def write_boolean(buf: bytearray, value: bool) -> None:
    if not isinstance(value, bool):
        raise UnsupportedType(f"{value!r} is not a Boolean")
    buf.append(1 if value else 0)


def write_string(buf: bytearray, value: str | None) -> None:
    if value is None:
        buf += b"\xff\xff\xff\xff"
        return
    if not isinstance(value, str):
        raise UnsupportedType(f"{value!r} is not a String")
    raw = value.encode("utf-8")
    buf += _I32.pack(len(raw))
    buf += raw


def write_bytestring(buf: bytearray, value: bytes | None) -> None:
    if value is None:
        buf += b"\xff\xff\xff\xff"
        return
    if not isinstance(value, (bytes, bytearray)):
        raise UnsupportedType(f"{value!r} is not a ByteString")
    buf += _I32.pack(len(value))
    buf += value


def write_guid(buf: bytearray, value: uuid.UUID) -> None:
    buf += value.bytes_le


def write_nodeid(buf: bytearray, value: NodeId) -> None:
    if not isinstance(value, NodeId):
        raise UnsupportedType(f"{value!r} is not a NodeId")
    form = value.canonical_form()
    ident = value.identifier
    buf.append(form)
    if form is NodeIdForm.TWO_BYTE:
        buf.append(ident)
    elif form is NodeIdForm.FOUR_BYTE:
        buf.append(value.namespace)
        buf += _U16.pack(ident)
    else:
        buf += _U16.pack(value.namespace)
        if form is NodeIdForm.NUMERIC:
            buf += _U32.pack(ident)
        elif form is NodeIdForm.STRING:
            write_string(buf, ident)
        elif form is NodeIdForm.GUID:
            write_guid(buf, ident)
        else:
            write_bytestring(buf, ident)


def write_qualifiedname(buf: bytearray, value: QualifiedName) -> None:
    if not isinstance(value, QualifiedName):
        raise UnsupportedType(f"{value!r} is not a QualifiedName")
    buf += _U16.pack(value.namespace)
    write_string(buf, value.name)


def write_localizedtext(buf: bytearray, value: LocalizedText) -> None:
    if not isinstance(value, LocalizedText):
        raise UnsupportedType(f"{value!r} is not a LocalizedText")
    buf.append(value.mask)
    if value.locale is not None:
        write_string(buf, value.locale)
    if value.text is not None:
        write_string(buf, value.text)


def write_extensionobject(buf: bytearray, value: ExtensionObject | None) -> None:
    if value is None:
        value = ExtensionObject()
    if not isinstance(value, ExtensionObject):
        raise UnsupportedType(f"{value!r} is not an ExtensionObject")
    write_nodeid(buf, value.type_id)
    buf.append(value.encoding)
    if value.encoding:
        write_bytestring(buf, value.body)


def write_variant(buf: bytearray, value: Variant) -> None:
    if not isinstance(value, Variant):
        raise UnsupportedType(f"{value!r} is not a Variant")
    buf.append(value.type)
    if value.type is not VariantType.Null:
        _SCALAR_WRITERS[value.type](buf, value.value)


def write_datavalue(buf: bytearray, value: DataValue) -> None:
    if not isinstance(value, DataValue):
        raise UnsupportedType(f"{value!r} is not a DataValue")
    buf.append(value.mask)
    if value.value is not None:
        write_variant(buf, value.value)
    if value.status is not None:
        buf += _U32.pack(value.status)
    if value.source_timestamp is not None:
        buf += _I64.pack(value.source_timestamp)
    if value.source_picoseconds is not None:
        buf += _U16.pack(value.source_picoseconds)
    if value.server_timestamp is not None:
        buf += _I64.pack(value.server_timestamp)
    if value.server_picoseconds is not None:
        buf += _U16.pack(value.server_picoseconds)


def write_diagnosticinfo(buf: bytearray, value: DiagnosticInfo | None) -> None:
    if value is None:
        buf.append(0)
        return
    mask = 0
    for bit, present in (
        (0x01, value.symbolic_id),
        (0x02, value.namespace_uri),
        (0x04, value.localized_text),
        (0x08, value.locale),
        (0x10, value.additional_info),
        (0x20, value.inner_status),
        (0x40, value.inner),
    ):
        if present is not None:
            mask |= bit
    buf.append(mask)
    if value.symbolic_id is not None:
        buf += _I32.pack(value.symbolic_id)
    if value.namespace_uri is not None:
        buf += _I32.pack(value.namespace_uri)
    if value.locale is not None:
        buf += _I32.pack(value.locale)
    if value.localized_text is not None:
        buf += _I32.pack(value.localized_text)
    if value.additional_info is not None:
        write_string(buf, value.additional_info)
    if value.inner_status is not None:
        buf += _U32.pack(value.inner_status)
    if value.inner is not None:
        write_diagnosticinfo(buf, value.inner)


def _write_float32(buf: bytearray, value: float) -> None:
    if not isinstance(value, float):
        raise UnsupportedType(f"{value!r} is not a Float")
    try:
        buf += _F32.pack(value)
    except OverflowError:
        raise UnsupportedType(f"{value!r} overflows Float") from None


def _write_float64(buf: bytearray, value: float) -> None:
    if not isinstance(value, float):
        raise UnsupportedType(f"{value!r} is not a Double")
    buf += _F64.pack(value)


_SCALAR_WRITERS: dict[VariantType, Callable[[bytearray, Any], None]] = {
    VariantType.Boolean: write_boolean,
    VariantType.SByte: _pack(_I8, "SByte"),
    VariantType.Byte: _pack(_U8, "Byte"),
    VariantType.Int16: _pack(_I16, "Int16"),
    VariantType.UInt16: _pack(_U16, "UInt16"),
    VariantType.Int32: _pack(_I32, "Int32"),
    VariantType.UInt32: _pack(_U32, "UInt32"),
    VariantType.Float: _write_float32,
    VariantType.Double: _write_float64,
    VariantType.String: write_string,
    VariantType.DateTime: _pack(_I64, "DateTime"),
    VariantType.ByteString: write_bytestring,
    VariantType.NodeId: write_nodeid,
    VariantType.QualifiedName: write_qualifiedname,
    VariantType.LocalizedText: write_localizedtext,
}

WRITERS: dict[str, Callable[[bytearray, Any], None]] = {
    "Boolean": write_boolean,
    "SByte": _pack(_I8, "SByte"),
    "Byte": _pack(_U8, "Byte"),
    "Int16": _pack(_I16, "Int16"),
    "UInt16": _pack(_U16, "UInt16"),
    "Int32": _pack(_I32, "Int32"),
    "UInt32": _pack(_U32, "UInt32"),
    "Int64": _pack(_I64, "Int64"),
    "UInt64": _pack(_U64, "UInt64"),
    "Float": _write_float32,
    "Double": _write_float64,
    "String": write_string,
    "DateTime": _pack(_I64, "DateTime"),
    "Guid": write_guid,
    "ByteString": write_bytestring,
    "NodeId": write_nodeid,
    "StatusCode": _pack(_U32, "StatusCode"),
    "QualifiedName": write_qualifiedname,
    "LocalizedText": write_localizedtext,
    "ExtensionObject": write_extensionobject,
    "DataValue": write_datavalue,
    "Variant": write_variant,
    "DiagnosticInfo": write_diagnosticinfo,
}
