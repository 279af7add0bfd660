"""Bridge to the asyncua reference stack, used only as an encoding oracle."""

from __future__ import annotations

import datetime as _dt

from asyncua import ua
from asyncua.ua import ua_binary

from uaengine.codec import (
    DataValue,
    LocalizedText,
    NodeId,
    QualifiedName,
    Variant,
    VariantType,
    ticks_to_datetime,
)


def to_ua(value):
    if isinstance(value, NodeId):
        return ua.NodeId(value.identifier, value.namespace)
    if isinstance(value, QualifiedName):
        return ua.QualifiedName(value.name, value.namespace)
    if isinstance(value, LocalizedText):
        return ua.LocalizedText(Text=value.text, Locale=value.locale)
    if isinstance(value, Variant):
        if value.type is VariantType.Null:
            return ua.Variant()
        inner = value.value
        if value.type is VariantType.DateTime:
            inner = ticks_to_datetime(inner)
        elif isinstance(inner, (NodeId, QualifiedName, LocalizedText)):
            inner = to_ua(inner)
        return ua.Variant(inner, ua.VariantType(int(value.type)))
    if isinstance(value, DataValue):
        def ts(t):
            return None if t is None else ticks_to_datetime(t)

        return ua.DataValue(
            Value=None if value.value is None else to_ua(value.value),
            StatusCode=None if value.status is None else ua.StatusCode(value.status),
            SourceTimestamp=ts(value.source_timestamp),
            ServerTimestamp=ts(value.server_timestamp),
            SourcePicoseconds=value.source_picoseconds,
            ServerPicoseconds=value.server_picoseconds,
        )
    raise TypeError(type(value))


_PRIMITIVES = {
    "Boolean": ua.Boolean,
    "SByte": ua.SByte,
    "Byte": ua.Byte,
    "Int16": ua.Int16,
    "UInt16": ua.UInt16,
    "Int32": ua.Int32,
    "UInt32": ua.UInt32,
    "Int64": ua.Int64,
    "UInt64": ua.UInt64,
    "Float": ua.Float,
    "Double": ua.Double,
    "String": ua.String,
    "ByteString": ua.ByteString,
}


def oracle_encode(value, type_name: str | None = None) -> bytes:
    """Encode with the reference stack."""
    if type_name in _PRIMITIVES:
        return ua_binary.to_binary(_PRIMITIVES[type_name], value)
    if type_name == "DateTime":
        return ua_binary.to_binary(ua.DateTime, ticks_to_datetime(value))
    if isinstance(value, NodeId):
        return ua_binary.nodeid_to_binary(to_ua(value))
    if isinstance(value, Variant):
        return ua_binary.variant_to_binary(to_ua(value))
    if isinstance(value, (QualifiedName, LocalizedText, DataValue)):
        return ua_binary.struct_to_binary(to_ua(value))
    raise TypeError(type(value))


def utc(*args) -> _dt.datetime:
    return _dt.datetime(*args, tzinfo=_dt.timezone.utc)
