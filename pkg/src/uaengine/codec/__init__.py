"""OPC UA binary codec for the Nano Embedded Device subset."""

from __future__ import annotations

from typing import Any

from .binary import DEFAULT_LIMITS, Limits, Reader
from .errors import CodecError, LimitExceeded, MalformedEncoding, Truncated, UnsupportedType
from .masking import mask_volatile_fields
from .messages import (
    ENCODING_IDS,
    NAMES_BY_ID,
    STRUCTS,
    ServiceMessage,
    decode_message,
    decode_struct,
    encode_message,
    encode_struct,
    extension_object,
    make_struct,
    open_extension_object,
    peek_message_type,
    response_header,
    service_fault,
    read_typed,
    write_typed,
)
from .status import StatusCode, status_name
from .types import (
    DataValue,
    DiagnosticInfo,
    ExtensionObject,
    LocalizedText,
    NodeId,
    NodeIdForm,
    QualifiedName,
    Variant,
    VariantType,
    datetime_to_ticks,
    ticks_to_datetime,
)

_INFERRED = (
    (Variant, "Variant"),
    (NodeId, "NodeId"),
    (LocalizedText, "LocalizedText"),
    (QualifiedName, "QualifiedName"),
    (DataValue, "DataValue"),
    (ExtensionObject, "ExtensionObject"),
    (DiagnosticInfo, "DiagnosticInfo"),
)


def encode_value(value: Any, type_name: str | None = None) -> bytes:
    """Encode a value; the type is inferred for the typed wrappers."""
    if isinstance(value, ServiceMessage):
        return encode_message(value)
    if type_name is None:
        for cls, name in _INFERRED:
            if isinstance(value, cls):
                type_name = name
                break
        else:
            raise UnsupportedType(f"cannot infer wire type of {value!r}; pass type_name")
    buf = bytearray()
    write_typed(buf, type_name, value)
    return bytes(buf)


def decode_value(data: bytes, expected: str, limits: Limits = DEFAULT_LIMITS) -> tuple[Any, int]:
    """Decode one value of ``expected`` type from the front of ``data``.

    Returns the value and the number of bytes consumed.  ``expected`` may be a
    built-in name, a structure name, either with ``[]``, or ``"Message"``.
    """
    if not data:
        raise Truncated("empty input")
    if expected == "Message":
        msg = decode_message(data, limits)
        return msg, len(data)
    r = Reader(data, limits=limits)
    value = read_typed(r, expected)
    return value, r.pos


__all__ = [
    "CodecError",
    "DataValue",
    "DEFAULT_LIMITS",
    "DiagnosticInfo",
    "ENCODING_IDS",
    "ExtensionObject",
    "LimitExceeded",
    "Limits",
    "LocalizedText",
    "MalformedEncoding",
    "NAMES_BY_ID",
    "NodeId",
    "NodeIdForm",
    "QualifiedName",
    "Reader",
    "STRUCTS",
    "ServiceMessage",
    "StatusCode",
    "Truncated",
    "UnsupportedType",
    "Variant",
    "VariantType",
    "datetime_to_ticks",
    "decode_message",
    "decode_struct",
    "decode_value",
    "encode_message",
    "encode_struct",
    "encode_value",
    "extension_object",
    "make_struct",
    "mask_volatile_fields",
    "open_extension_object",
    "peek_message_type",
    "response_header",
    "service_fault",
    "status_name",
    "ticks_to_datetime",
]
