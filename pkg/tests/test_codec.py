import json
import math
import pathlib
import uuid

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus_values import build_corpus
from uaengine.codec import (
    DataValue,
    LimitExceeded,
    Limits,
    LocalizedText,
    MalformedEncoding,
    NodeId,
    QualifiedName,
    ServiceMessage,
    StatusCode,
    Truncated,
    UnsupportedType,
    Variant,
    VariantType,
    decode_message,
    decode_value,
    encode_message,
    encode_value,
    extension_object,
    mask_volatile_fields,
    open_extension_object,
)

CORPUS = build_corpus()
FROZEN = json.loads((pathlib.Path(__file__).parent / "data" / "codec_corpus.json").read_text())


def _type_name(value, type_name):
    if type_name:
        return type_name
    return type(value).__name__


def _same(a, b):
    if isinstance(a, float) and isinstance(b, float):
        return a == b and math.copysign(1, a) == math.copysign(1, b)
    return a == b


# --- pinned examples ------------------------------------------------------


def test_int32_five():
    assert encode_value(5, "Int32") == bytes.fromhex("05000000")


def test_null_string():
    assert encode_value(None, "String") == b"\xff\xff\xff\xff"


def test_nodeid_two_byte():
    assert encode_value(NodeId(0, 5)) == bytes.fromhex("0005")
    assert decode_value(bytes.fromhex("0005"), "NodeId") == (NodeId(0, 5), 2)


def test_empty_input_truncated():
    with pytest.raises(Truncated):
        decode_value(b"", "Int32")


def test_huge_declared_string_length():
    data = (2**31 - 2).to_bytes(4, "little") + b"abc"
    with pytest.raises(LimitExceeded):
        decode_value(data, "String", Limits(max_string_length=65536))


def test_datavalue_standard_field_order():
    # mask, variant Int32 1, srcTs 1, srcPico 2, srvTs 3, srvPico 4
    dv = DataValue(Variant(VariantType.Int32, 1), None, 1, 2, 3, 4)
    expected = bytes.fromhex("3d" "0601000000" "0100000000000000" "0200" "0300000000000000" "0400")
    assert encode_value(dv) == expected
    assert decode_value(expected, "DataValue") == (dv, len(expected))


def test_status_only_datavalue():
    dv = DataValue(None, StatusCode.BadNodeIdUnknown)
    assert encode_value(dv) == bytes.fromhex("0200003480")


# --- oracle corpus --------------------------------------------------------


def test_corpus_is_large_enough():
    assert len(CORPUS) >= 200
    assert set(FROZEN) == {label for label, _, _ in CORPUS}


@pytest.mark.parametrize("label,value,type_name", CORPUS, ids=[c[0] for c in CORPUS])
def test_corpus_matches_reference_encoding(label, value, type_name):
    expected = bytes.fromhex(FROZEN[label])
    assert encode_value(value, type_name) == expected
    decoded, consumed = decode_value(expected, _type_name(value, type_name))
    assert consumed == len(expected)
    assert _same(decoded, value)


def test_corpus_frozen_bytes_still_match_live_oracle():
    oracle = pytest.importorskip("ua_oracle")
    for label, value, type_name in CORPUS:
        assert oracle.oracle_encode(value, type_name).hex() == FROZEN[label], label


# --- message bodies against the reference stack ---------------------------


def _ua_messages():
    ua = pytest.importorskip("asyncua.ua")
    read = ua.ReadRequest()
    read.Parameters.NodesToRead = [
        ua.ReadValueId(NodeId=ua.NodeId(1003, 1), AttributeId=13),
        ua.ReadValueId(NodeId=ua.NodeId(2259, 0), AttributeId=4),
    ]
    read.Parameters.TimestampsToReturn = ua.TimestampsToReturn.Both
    write = ua.WriteRequest()
    write.Parameters.NodesToWrite = [
        ua.WriteValue(
            NodeId=ua.NodeId(1003, 1),
            AttributeId=13,
            Value=ua.DataValue(ua.Variant(42, ua.VariantType.Int32)),
        )
    ]
    create = ua.CreateSessionRequest()
    create.Parameters.SessionName = "s1"
    create.Parameters.RequestedSessionTimeout = 3600000.0
    create.Parameters.ClientNonce = b"\x01" * 32
    activate = ua.ActivateSessionRequest()
    activate.Parameters.UserIdentityToken = ua.AnonymousIdentityToken(PolicyId="anonymous")
    get_ep = ua.GetEndpointsRequest()
    get_ep.Parameters.EndpointUrl = "opc.tcp://localhost:4840/"
    resp = ua.ReadResponse()
    resp.Results = [ua.DataValue(ua.Variant(7, ua.VariantType.Int32))]
    wresp = ua.WriteResponse()
    wresp.Results = [ua.StatusCode(0x803B0000)]
    return [read, write, create, activate, get_ep, ua.CloseSessionRequest(), resp, wresp]


def test_messages_roundtrip_reference_bytes():
    from asyncua.ua.ua_binary import struct_to_binary

    for msg in _ua_messages():
        raw = struct_to_binary(msg)
        decoded = decode_message(raw)
        assert encode_message(decoded) == raw, type(msg).__name__


def test_reference_stack_decodes_our_responses():
    ua = pytest.importorskip("asyncua.ua")
    from asyncua.common.utils import Buffer
    from asyncua.ua.ua_binary import struct_from_binary

    msg = ServiceMessage.new(
        "ReadResponse",
        Results=[DataValue(Variant(VariantType.Int32, 9), 0, 5, None, 5)],
        DiagnosticInfos=[],
    )
    parsed = struct_from_binary(ua.ReadResponse, Buffer(encode_message(msg)))
    assert parsed.Results[0].Value.Value == 9
    assert parsed.Results[0].StatusCode.is_good()


def test_identity_token_extension_object():
    eo = extension_object("AnonymousIdentityToken", PolicyId="anonymous")
    assert open_extension_object(eo) == ("AnonymousIdentityToken", {"PolicyId": "anonymous"})
    assert open_extension_object(None) == (None, None)


def test_trailing_bytes_rejected():
    raw = encode_message(ServiceMessage.new("CloseSessionResponse"))
    with pytest.raises(MalformedEncoding):
        decode_message(raw + b"\x00")


# --- error typing ---------------------------------------------------------


def test_unknown_nodeid_form():
    with pytest.raises(MalformedEncoding):
        decode_value(b"\x07\x00", "NodeId")


def test_variant_array_rejected():
    with pytest.raises(UnsupportedType):
        decode_value(bytes([0x86, 1, 0, 0, 0, 5, 0, 0, 0]), "Variant")
    with pytest.raises(UnsupportedType):
        Variant(VariantType.Int32, [1, 2])


def test_unsupported_variant_type():
    with pytest.raises(UnsupportedType):
        Variant(VariantType.Int64, 1)
    with pytest.raises(UnsupportedType):
        decode_value(bytes([VariantType.Guid]) + bytes(16), "Variant")


def test_encode_needs_type_for_plain_python():
    with pytest.raises(UnsupportedType):
        encode_value(5)


def test_truncated_string_body():
    with pytest.raises(Truncated):
        decode_value(b"\x05\x00\x00\x00ab", "String")


def test_negative_length_is_malformed():
    with pytest.raises(MalformedEncoding):
        decode_value(b"\xfe\xff\xff\xff", "String")


# --- masking --------------------------------------------------------------


def _read_response(ts, handle):
    return ServiceMessage.new(
        "ReadResponse",
        ResponseHeader={"Timestamp": ts, "RequestHandle": handle, "ServiceResult": 0},
        Results=[DataValue(Variant(VariantType.Int32, 1), 0, ts, None, ts)],
    )


def test_mask_zeroes_timestamp():
    masked = mask_volatile_fields(_read_response(123456, 7))
    assert masked["ResponseHeader"]["Timestamp"] == 0
    assert masked["Results"][0].source_timestamp == 0


def test_mask_identity_without_volatile_fields():
    msg = ServiceMessage.new("WriteResponse", Results=[0])
    assert mask_volatile_fields(msg) == msg


def test_mask_equalizes_captures_at_different_times():
    a = mask_volatile_fields(_read_response(100, 1))
    b = mask_volatile_fields(_read_response(999, 2))
    assert a == b


def test_mask_does_not_mutate_input():
    msg = _read_response(100, 1)
    mask_volatile_fields(msg)
    assert msg["ResponseHeader"]["Timestamp"] == 100


def test_mask_server_nonce():
    msg = ServiceMessage.new("CreateSessionResponse", ServerNonce=b"\x01" * 32)
    assert mask_volatile_fields(msg)["ServerNonce"] == b"<nonce>"


# --- properties -----------------------------------------------------------

_text = st.one_of(st.none(), st.text(max_size=40))
_nodeids = st.one_of(
    st.builds(NodeId, st.integers(0, 0xFFFF), st.integers(0, 2**32 - 1)),
    st.builds(NodeId, st.integers(0, 0xFFFF), st.text(max_size=30)),
    st.builds(NodeId, st.integers(0, 0xFFFF), st.uuids()),
    st.builds(NodeId, st.integers(0, 0xFFFF), st.binary(max_size=30)),
)
_variants = st.one_of(
    st.just(Variant()),
    st.builds(Variant, st.just(VariantType.Boolean), st.booleans()),
    st.builds(Variant, st.just(VariantType.Int32), st.integers(-(2**31), 2**31 - 1)),
    st.builds(Variant, st.just(VariantType.UInt16), st.integers(0, 0xFFFF)),
    st.builds(Variant, st.just(VariantType.Double), st.floats(allow_nan=False)),
    st.builds(Variant, st.just(VariantType.Float), st.floats(width=32, allow_nan=False)),
    st.builds(Variant, st.just(VariantType.String), _text),
    st.builds(Variant, st.just(VariantType.NodeId), _nodeids),
    st.builds(Variant, st.just(VariantType.LocalizedText), st.builds(LocalizedText, _text, _text)),
    st.builds(Variant, st.just(VariantType.QualifiedName), st.builds(QualifiedName, st.integers(0, 0xFFFF), _text)),
)


@settings(max_examples=300, deadline=None)
@given(_nodeids)
def test_nodeid_roundtrip_and_shortest_form(nid):
    raw = encode_value(nid)
    assert decode_value(raw, "NodeId") == (nid, len(raw))
    if isinstance(nid.identifier, int):
        if nid.namespace == 0 and nid.identifier <= 255:
            assert len(raw) == 2
        elif nid.namespace <= 255 and nid.identifier <= 65535:
            assert len(raw) == 4
        else:
            assert len(raw) == 7


@settings(max_examples=300, deadline=None)
@given(_variants)
def test_variant_roundtrip(v):
    raw = encode_value(v)
    decoded, consumed = decode_value(raw, "Variant")
    assert consumed == len(raw)
    assert decoded == v
    assert encode_value(decoded) == raw


@settings(max_examples=200, deadline=None)
@given(st.builds(LocalizedText, _text, _text))
def test_localizedtext_mask_bits(lt):
    raw = encode_value(lt)
    assert bool(raw[0] & 1) == (lt.locale is not None)
    assert bool(raw[0] & 2) == (lt.text is not None)
    assert decode_value(raw, "LocalizedText") == (lt, len(raw))


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=64), st.sampled_from(["NodeId", "Variant", "DataValue", "LocalizedText", "String", "ExtensionObject"]))
def test_canonical_bytes_reencode_identically(data, type_name):
    try:
        value, consumed = decode_value(data, type_name)
    except Exception:
        return
    prefix = data[:consumed]
    again = encode_value(value, type_name)
    if again == prefix:
        return
    # only NodeId forms may be non-canonical on input; the re-encoding is shorter
    assert len(again) < len(prefix)


def test_guid_nodeid_decodes():
    g = uuid.UUID("72962b91-fa75-4ae6-8d28-b404dc7daf63")
    raw = encode_value(NodeId(1, g))
    assert raw[0] == 4 and len(raw) == 19
    assert decode_value(raw, "NodeId")[0] == NodeId(1, g)
