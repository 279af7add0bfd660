"""Service message bodies of the Nano subset, described declaratively.

A structure is a list of ``(field, type)`` pairs; a type is a built-in name,
a structure name, or either with a ``[]`` suffix for an array.  Decoded
structures are plain dicts so that responses can be compared field by field.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

from .binary import DEFAULT_LIMITS, READERS, WRITERS, Limits, Reader, _I32, read_nodeid, write_nodeid
from .errors import MalformedEncoding, UnsupportedType
from .types import ExtensionObject, NodeId

STRUCTS: dict[str, list[tuple[str, str]]] = {
    "RequestHeader": [
        ("AuthenticationToken", "NodeId"),
        ("Timestamp", "DateTime"),
        ("RequestHandle", "UInt32"),
        ("ReturnDiagnostics", "UInt32"),
        ("AuditEntryId", "String"),
        ("TimeoutHint", "UInt32"),
        ("AdditionalHeader", "ExtensionObject"),
    ],
    "ResponseHeader": [
        ("Timestamp", "DateTime"),
        ("RequestHandle", "UInt32"),
        ("ServiceResult", "StatusCode"),
        ("ServiceDiagnostics", "DiagnosticInfo"),
        ("StringTable", "String[]"),
        ("AdditionalHeader", "ExtensionObject"),
    ],
    "ApplicationDescription": [
        ("ApplicationUri", "String"),
        ("ProductUri", "String"),
        ("ApplicationName", "LocalizedText"),
        ("ApplicationType", "UInt32"),
        ("GatewayServerUri", "String"),
        ("DiscoveryProfileUri", "String"),
        ("DiscoveryUrls", "String[]"),
    ],
    "UserTokenPolicy": [
        ("PolicyId", "String"),
        ("TokenType", "UInt32"),
        ("IssuedTokenType", "String"),
        ("IssuerEndpointUrl", "String"),
        ("SecurityPolicyUri", "String"),
    ],
    "EndpointDescription": [
        ("EndpointUrl", "String"),
        ("Server", "ApplicationDescription"),
        ("ServerCertificate", "ByteString"),
        ("SecurityMode", "UInt32"),
        ("SecurityPolicyUri", "String"),
        ("UserIdentityTokens", "UserTokenPolicy[]"),
        ("TransportProfileUri", "String"),
        ("SecurityLevel", "Byte"),
    ],
    "SignedSoftwareCertificate": [
        ("CertificateData", "ByteString"),
        ("Signature", "ByteString"),
    ],
    "SignatureData": [
        ("Algorithm", "String"),
        ("Signature", "ByteString"),
    ],
    "ChannelSecurityToken": [
        ("ChannelId", "UInt32"),
        ("TokenId", "UInt32"),
        ("CreatedAt", "DateTime"),
        ("RevisedLifetime", "UInt32"),
    ],
    "ReadValueId": [
        ("NodeId", "NodeId"),
        ("AttributeId", "UInt32"),
        ("IndexRange", "String"),
        ("DataEncoding", "QualifiedName"),
    ],
    "WriteValue": [
        ("NodeId", "NodeId"),
        ("AttributeId", "UInt32"),
        ("IndexRange", "String"),
        ("Value", "DataValue"),
    ],
    "AnonymousIdentityToken": [("PolicyId", "String")],
    "UserNameIdentityToken": [
        ("PolicyId", "String"),
        ("UserName", "String"),
        ("Password", "ByteString"),
        ("EncryptionAlgorithm", "String"),
    ],
    # service bodies
    "OpenSecureChannelRequest": [
        ("RequestHeader", "RequestHeader"),
        ("ClientProtocolVersion", "UInt32"),
        ("RequestType", "UInt32"),
        ("SecurityMode", "UInt32"),
        ("ClientNonce", "ByteString"),
        ("RequestedLifetime", "UInt32"),
    ],
    "OpenSecureChannelResponse": [
        ("ResponseHeader", "ResponseHeader"),
        ("ServerProtocolVersion", "UInt32"),
        ("SecurityToken", "ChannelSecurityToken"),
        ("ServerNonce", "ByteString"),
    ],
    "CloseSecureChannelRequest": [("RequestHeader", "RequestHeader")],
    "CloseSecureChannelResponse": [("ResponseHeader", "ResponseHeader")],
    "GetEndpointsRequest": [
        ("RequestHeader", "RequestHeader"),
        ("EndpointUrl", "String"),
        ("LocaleIds", "String[]"),
        ("ProfileUris", "String[]"),
    ],
    "GetEndpointsResponse": [
        ("ResponseHeader", "ResponseHeader"),
        ("Endpoints", "EndpointDescription[]"),
    ],
    "CreateSessionRequest": [
        ("RequestHeader", "RequestHeader"),
        ("ClientDescription", "ApplicationDescription"),
        ("ServerUri", "String"),
        ("EndpointUrl", "String"),
        ("SessionName", "String"),
        ("ClientNonce", "ByteString"),
        ("ClientCertificate", "ByteString"),
        ("RequestedSessionTimeout", "Double"),
        ("MaxResponseMessageSize", "UInt32"),
    ],
    "CreateSessionResponse": [
        ("ResponseHeader", "ResponseHeader"),
        ("SessionId", "NodeId"),
        ("AuthenticationToken", "NodeId"),
        ("RevisedSessionTimeout", "Double"),
        ("ServerNonce", "ByteString"),
        ("ServerCertificate", "ByteString"),
        ("ServerEndpoints", "EndpointDescription[]"),
        ("ServerSoftwareCertificates", "SignedSoftwareCertificate[]"),
        ("ServerSignature", "SignatureData"),
        ("MaxRequestMessageSize", "UInt32"),
    ],
    "ActivateSessionRequest": [
        ("RequestHeader", "RequestHeader"),
        ("ClientSignature", "SignatureData"),
        ("ClientSoftwareCertificates", "SignedSoftwareCertificate[]"),
        ("LocaleIds", "String[]"),
        ("UserIdentityToken", "ExtensionObject"),
        ("UserTokenSignature", "SignatureData"),
    ],
    "ActivateSessionResponse": [
        ("ResponseHeader", "ResponseHeader"),
        ("ServerNonce", "ByteString"),
        ("Results", "StatusCode[]"),
        ("DiagnosticInfos", "DiagnosticInfo[]"),
    ],
    "CloseSessionRequest": [
        ("RequestHeader", "RequestHeader"),
        ("DeleteSubscriptions", "Boolean"),
    ],
    "CloseSessionResponse": [("ResponseHeader", "ResponseHeader")],
    "ReadRequest": [
        ("RequestHeader", "RequestHeader"),
        ("MaxAge", "Double"),
        ("TimestampsToReturn", "UInt32"),
        ("NodesToRead", "ReadValueId[]"),
    ],
    "ReadResponse": [
        ("ResponseHeader", "ResponseHeader"),
        ("Results", "DataValue[]"),
        ("DiagnosticInfos", "DiagnosticInfo[]"),
    ],
    "WriteRequest": [
        ("RequestHeader", "RequestHeader"),
        ("NodesToWrite", "WriteValue[]"),
    ],
    "WriteResponse": [
        ("ResponseHeader", "ResponseHeader"),
        ("Results", "StatusCode[]"),
        ("DiagnosticInfos", "DiagnosticInfo[]"),
    ],
    "ServiceFault": [("ResponseHeader", "ResponseHeader")],
}

# Binary encoding NodeIds (namespace 0) of every structure that travels as a message body.
ENCODING_IDS: dict[str, int] = {
    "ServiceFault": 397,
    "AnonymousIdentityToken": 321,
    "UserNameIdentityToken": 324,
    "GetEndpointsRequest": 428,
    "GetEndpointsResponse": 431,
    "OpenSecureChannelRequest": 446,
    "OpenSecureChannelResponse": 449,
    "CloseSecureChannelRequest": 452,
    "CloseSecureChannelResponse": 455,
    "CreateSessionRequest": 461,
    "CreateSessionResponse": 464,
    "ActivateSessionRequest": 467,
    "ActivateSessionResponse": 470,
    "CloseSessionRequest": 473,
    "CloseSessionResponse": 476,
    "ReadRequest": 631,
    "ReadResponse": 634,
    "WriteRequest": 673,
    "WriteResponse": 676,
}
NAMES_BY_ID = {v: k for k, v in ENCODING_IDS.items()}

_SCALAR_DEFAULTS: dict[str, Any] = {
    "Boolean": False,
    "NodeId": NodeId(),
    "ExtensionObject": ExtensionObject(),
    "String": None,
    "ByteString": None,
    "LocalizedText": None,
    "QualifiedName": None,
    "DataValue": None,
    "Variant": None,
    "DiagnosticInfo": None,
}


@dataclass
class ServiceMessage:
    """A decoded message body: its encoding NodeId plus field values."""

    type_id: int
    fields: dict[str, Any] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return NAMES_BY_ID.get(self.type_id, f"i={self.type_id}")

    @classmethod
    def new(cls, name: str, **fields: Any) -> ServiceMessage:
        return cls(ENCODING_IDS[name], make_struct(name, **fields))

    def __getitem__(self, key: str) -> Any:
        return self.fields[key]

    def copy(self) -> ServiceMessage:
        return ServiceMessage(self.type_id, copy.deepcopy(self.fields))


def default_value(type_name: str) -> Any:
    if type_name.endswith("[]"):
        return []
    if type_name in STRUCTS:
        return make_struct(type_name)
    if type_name in _SCALAR_DEFAULTS:
        return _SCALAR_DEFAULTS[type_name]
    if type_name in ("Float", "Double"):
        return 0.0
    return 0


def make_struct(name: str, **values: Any) -> dict[str, Any]:
    spec = STRUCTS[name]
    known = {f for f, _ in spec}
    unknown = set(values) - known
    if unknown:
        raise KeyError(f"{name} has no field(s) {sorted(unknown)}")
    return {f: (values[f] if f in values else default_value(t)) for f, t in spec}


# --- decoding -------------------------------------------------------------


def read_typed(r: Reader, type_name: str) -> Any:
    if type_name.endswith("[]"):
        elem = type_name[:-2]
        n = r.length_prefix(r.limits.max_array_length)
        if n == -1:
            return None
        return [read_typed(r, elem) for _ in range(n)]
    reader = READERS.get(type_name)
    if reader is not None:
        return reader(r)
    spec = STRUCTS.get(type_name)
    if spec is None:
        raise UnsupportedType(f"no decoder for {type_name}")
    return {name: read_typed(r, t) for name, t in spec}


def decode_message(data: bytes, limits: Limits = DEFAULT_LIMITS) -> ServiceMessage:
    """Decode ``typeId + body``; the body must consume the input exactly."""
    r = Reader(data, limits=limits)
    type_id = read_nodeid(r)
    if type_id.namespace != 0 or not isinstance(type_id.identifier, int):
        raise MalformedEncoding(f"message type {type_id} is not a namespace-0 numeric id")
    name = NAMES_BY_ID.get(type_id.identifier)
    if name is None or name not in STRUCTS:
        raise UnsupportedType(f"unknown message type {type_id}")
    fields = read_typed(r, name)
    if r.remaining:
        raise MalformedEncoding(f"{name}: {r.remaining} trailing bytes")
    return ServiceMessage(type_id.identifier, fields)


def peek_message_type(data: bytes) -> tuple[int | None, dict[str, Any] | None]:
    """Best-effort read of the type id and request header at the start of a body."""
    r = Reader(data)
    try:
        type_id = read_nodeid(r)
    except Exception:
        return None, None
    ident = type_id.identifier if type_id.namespace == 0 and isinstance(type_id.identifier, int) else None
    try:
        header = read_typed(r, "RequestHeader")
    except Exception:
        header = None
    return ident, header


def decode_struct(data: bytes, name: str, limits: Limits = DEFAULT_LIMITS) -> dict[str, Any]:
    r = Reader(data, limits=limits)
    value = read_typed(r, name)
    if r.remaining:
        raise MalformedEncoding(f"{name}: {r.remaining} trailing bytes")
    return value


# --- encoding -------------------------------------------------------------


def write_typed(buf: bytearray, type_name: str, value: Any) -> None:
    if type_name.endswith("[]"):
        elem = type_name[:-2]
        if value is None:
            buf += _I32.pack(-1)
            return
        buf += _I32.pack(len(value))
        for item in value:
            write_typed(buf, elem, item)
        return
    writer = WRITERS.get(type_name)
    if writer is not None:
        writer(buf, value)
        return
    spec = STRUCTS.get(type_name)
    if spec is None:
        raise UnsupportedType(f"no encoder for {type_name}")
    if not isinstance(value, dict):
        raise UnsupportedType(f"{type_name} must be given as a dict, got {type(value).__name__}")
    for name, t in spec:
        write_typed(buf, t, value[name] if name in value else default_value(t))


def encode_message(msg: ServiceMessage) -> bytes:
    name = NAMES_BY_ID.get(msg.type_id)
    if name is None or name not in STRUCTS:
        raise UnsupportedType(f"unknown message type i={msg.type_id}")
    buf = bytearray()
    write_nodeid(buf, NodeId(0, msg.type_id))
    write_typed(buf, name, msg.fields)
    return bytes(buf)


def encode_struct(name: str, value: dict[str, Any]) -> bytes:
    buf = bytearray()
    write_typed(buf, name, value)
    return bytes(buf)


def response_header(request_handle: int = 0, status: int = 0, timestamp: int = 0) -> dict[str, Any]:
    return make_struct("ResponseHeader", Timestamp=timestamp, RequestHandle=request_handle, ServiceResult=status)


def service_fault(status: int, request_handle: int = 0, timestamp: int = 0) -> ServiceMessage:
    return ServiceMessage.new("ServiceFault", ResponseHeader=response_header(request_handle, status, timestamp))


def extension_object(name: str, **fields: Any) -> ExtensionObject:
    """Wrap a structure as a binary-encoded ExtensionObject."""
    body = encode_struct(name, make_struct(name, **fields))
    return ExtensionObject(NodeId(0, ENCODING_IDS[name]), body, 1)


def open_extension_object(eo: ExtensionObject, limits: Limits = DEFAULT_LIMITS) -> tuple[str | None, dict | None]:
    """Decode a known ExtensionObject body; ``(None, None)`` for null or unknown ones."""
    if eo is None or eo.encoding != 1 or eo.type_id.namespace != 0:
        return None, None
    name = NAMES_BY_ID.get(eo.type_id.identifier)
    if name is None or eo.body is None:
        return name, None
    return name, decode_struct(eo.body, name, limits)
