import struct

import pytest
from asyncua import ua
from hypothesis import given, settings
from hypothesis import strategies as st

from uaengine.codec import StatusCode
from uaengine.engine import EngineCore
from uaengine.s3 import BufferPool
from uaengine.transport import (
    ChannelIdAllocator,
    MessageChunk,
    MessageTooLarge,
    Reassembler,
    ServerCapabilities,
    TransportConnection,
    TransportError,
    TransportLimits,
    decode_chunk,
    encode_hello,
    max_body_size,
    split_into_chunks,
)
from uaengine.transport.chunks import FrameSplitter, Hello, decode_acknowledge, decode_error
from uaclient import URL, ErrorReply, FrameClient


class Echo:
    """Message handler that returns the request unchanged."""

    def __init__(self):
        self.closed = []

    def handle_message(self, channel_id, request):
        return request, None

    def channel_closed(self, channel_id):
        self.closed.append(channel_id)


def connection(limits=None, handler=None, ids=None, pool=None):
    caps = ServerCapabilities(limits or TransportLimits(), pool=pool)
    return TransportConnection(handler or Echo(), ids or ChannelIdAllocator(), lambda: 0, caps)


def err_status(frames):
    (frame,) = frames
    assert frame[:4] == b"ERRF"
    return decode_error(frame[8:])[0]


# --- Hello / Acknowledge ------------------------------------------------------


def test_ack_takes_minimum_of_offer_and_capability():
    c = FrameClient(connection())
    ack = c.hello(recv=65536, send=65536)
    assert ack.ReceiveBufferSize == 8192
    assert ack.SendBufferSize == 8192
    assert ack.MaxChunkCount == 4


def test_ack_echoes_offer_equal_to_capability():
    c = FrameClient(connection())
    ack = c.hello(recv=8192, send=8192, max_msg=8192, max_chunks=4)
    assert (ack.ReceiveBufferSize, ack.SendBufferSize, ack.MaxMessageSize, ack.MaxChunkCount) == (8192, 8192, 8192, 4)


def test_ack_min_is_per_field():
    tc = connection(TransportLimits(0, 16384, 16384, 65536, 8))
    ack = FrameClient(tc).hello(recv=12000, send=9000, max_msg=20000, max_chunks=2)
    # our receive buffer bounds what the client may send, and vice versa
    assert ack.ReceiveBufferSize == 9000
    assert ack.SendBufferSize == 12000
    assert ack.MaxMessageSize == 20000
    assert ack.MaxChunkCount == 2


def test_second_hello_is_error_and_closes():
    tc = connection()
    c = FrameClient(tc)
    c.hello()
    with pytest.raises(ErrorReply) as exc:
        c.hello()
    assert exc.value.status == StatusCode.BadTcpMessageTypeInvalid
    assert tc.closed


def test_hello_with_small_buffers_rejected():
    tc = connection()
    with pytest.raises(ErrorReply) as exc:
        FrameClient(tc).hello(recv=4096, send=4096)
    assert exc.value.status == StatusCode.BadTcpMessageTooLarge
    assert tc.closed


def test_message_before_hello_is_error():
    tc = connection()
    frame = MessageChunk(b"MSG", b"F", 1, 1, 1, b"x", token_id=1).encode()
    assert err_status(tc.receive(frame)) == StatusCode.BadTcpMessageTypeInvalid
    assert tc.closed


def test_closed_connection_ignores_input():
    tc = connection()
    tc.close()
    assert tc.receive(encode_hello(Hello(TransportLimits(), URL))) == []


# --- secure channel --------------------------------------------------------------


def test_open_none_policy_gives_channel():
    c = FrameClient(connection()).connect()
    resp = c.sc  # asyncua tracked the token from our response
    assert resp.security_token.ChannelId > 0
    assert resp.security_token.TokenId == 1


def test_open_rejects_other_policies():
    tc = connection()
    c = FrameClient(tc)
    c.hello()
    with pytest.raises(ErrorReply) as exc:
        c.open(policy="http://opcfoundation.org/UA/SecurityPolicy#Basic256Sha256")
    assert exc.value.status == StatusCode.BadSecurityPolicyRejected
    assert tc.closed


def test_open_rejects_sign_mode():
    c = FrameClient(connection())
    c.hello()
    with pytest.raises(ErrorReply) as exc:
        c.open(mode=ua.MessageSecurityMode.Sign)
    assert exc.value.status == StatusCode.BadSecurityModeRejected


def test_channel_ids_are_fresh():
    ids = ChannelIdAllocator()
    seen = set()
    for _ in range(20):
        c = FrameClient(connection(ids=ids)).connect()
        cid = c.sc.security_token.ChannelId
        assert cid not in seen
        seen.add(cid)
        c.close_channel()


def test_renew_keeps_channel_and_bumps_token():
    c = FrameClient(connection()).connect()
    cid = c.sc.security_token.ChannelId
    resp = c.open(request_type=ua.SecurityTokenRequestType.Renew)
    assert resp.Parameters.SecurityToken.ChannelId == cid
    assert resp.Parameters.SecurityToken.TokenId == 2


def test_msg_before_open_is_unknown_channel():
    tc = connection()
    FrameClient(tc).hello()
    frame = MessageChunk(b"MSG", b"F", 7, 1, 1, b"x", token_id=1).encode()
    assert err_status(tc.receive(frame)) == StatusCode.BadTcpSecureChannelUnknown
    assert tc.closed


def test_msg_on_wrong_channel_id():
    tc = connection()
    c = FrameClient(tc).connect()
    cid = c.sc.security_token.ChannelId
    frame = MessageChunk(b"MSG", b"F", cid + 1, 2, 2, b"x", token_id=1).encode()
    assert err_status(tc.receive(frame)) == StatusCode.BadTcpSecureChannelUnknown


def test_msg_with_unknown_token():
    tc = connection()
    c = FrameClient(tc).connect()
    cid = c.sc.security_token.ChannelId
    frame = MessageChunk(b"MSG", b"F", cid, 2, 2, b"x", token_id=9).encode()
    assert err_status(tc.receive(frame)) == StatusCode.BadSecureChannelTokenUnknown


def test_sequence_gap_closes_channel():
    handler = Echo()
    tc = connection(handler=handler)
    c = FrameClient(tc).connect()
    cid = c.sc.security_token.ChannelId
    # the OPN used sequence number 1; skip 2
    frame = MessageChunk(b"MSG", b"F", cid, 3, 2, b"hello", token_id=1).encode()
    assert err_status(tc.receive(frame)) == StatusCode.BadSequenceNumberInvalid
    assert tc.closed
    assert handler.closed == [cid]


def test_echo_roundtrip_and_sequence_numbers():
    tc = connection()
    c = FrameClient(tc).connect()
    cid = c.sc.security_token.ChannelId
    out = tc.receive(MessageChunk(b"MSG", b"F", cid, 2, 5, b"abc", token_id=1).encode())
    (chunk,) = [decode_chunk(f) for f in out]
    assert (chunk.body, chunk.request_id, chunk.sequence_number) == (b"abc", 5, 2)
    out = tc.receive(MessageChunk(b"MSG", b"F", cid, 3, 6, b"def", token_id=1).encode())
    assert decode_chunk(out[0]).sequence_number == 3


def test_clo_closes_and_frees():
    handler = Echo()
    tc = connection(handler=handler)
    c = FrameClient(tc).connect()
    assert c.close_channel() == []
    assert tc.closed
    assert handler.closed == [c.sc.security_token.ChannelId]


def test_bytes_split_across_reads():
    tc = connection()
    hello = encode_hello(Hello(TransportLimits(), URL))
    assert tc.receive(hello[:5]) == []
    (ack,) = tc.receive(hello[5:])
    assert decode_acknowledge(ack[8:]).receive_buffer_size == 8192


def test_bad_message_type_in_header():
    tc = connection()
    assert err_status(tc.receive(b"XYZF" + struct.pack("<I", 8))) == StatusCode.BadTcpMessageTypeInvalid


def test_frame_larger_than_buffer_is_error():
    tc = connection()
    FrameClient(tc).hello()
    assert err_status(tc.receive(b"MSGF" + struct.pack("<I", 9000))) == StatusCode.BadTcpMessageTooLarge


# --- chunking ---------------------------------------------------------------------

LIMITS = TransportLimits(0, 8192, 8192, 0, 0)


def test_one_body_is_single_final_chunk():
    body = max_body_size(LIMITS)
    chunks = split_into_chunks(b"x" * body, LIMITS)
    assert [c.chunk_flag for c in chunks] == [b"F"]
    assert len(chunks[0].encode()) == 8192


def test_two_bodies_plus_one_is_ccf():
    body = max_body_size(LIMITS)
    chunks = split_into_chunks(b"x" * (2 * body + 1), LIMITS)
    assert [c.chunk_flag for c in chunks] == [b"C", b"C", b"F"]
    assert [len(c.body) for c in chunks] == [body, body, 1]
    assert [c.sequence_number for c in chunks] == [1, 2, 3]


def test_split_respects_chunk_count():
    limits = TransportLimits(0, 8192, 8192, 0, 2)
    with pytest.raises(TransportError) as exc:
        split_into_chunks(b"x" * (2 * max_body_size(limits) + 1), limits)
    assert exc.value.status == StatusCode.BadRequestTooLarge


def test_split_respects_message_size():
    limits = TransportLimits(0, 8192, 8192, 100, 0)
    with pytest.raises(TransportError):
        split_into_chunks(b"x" * 101, limits)


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=64 * 1024), st.integers(8192, 20000))
def test_reassemble_inverts_split(msg, buffer_size):
    limits = TransportLimits(0, buffer_size, buffer_size, 0, 0)
    chunks = split_into_chunks(msg, limits, request_id=3)
    assert all(len(c.encode()) <= buffer_size for c in chunks)
    r = Reassembler(capacity=len(msg) + 1)
    results = [r.feed(decode_chunk(c.encode())) for c in chunks]
    assert results[:-1] == [None] * (len(chunks) - 1)
    assert results[-1] == msg


def chunk(flag, body, rid=1):
    return MessageChunk(b"MSG", flag, 1, 1, rid, body)


def test_reassemble_concatenates():
    r = Reassembler(8192)
    assert r.feed(chunk(b"C", b"ab")) is None
    assert r.feed(chunk(b"F", b"cd")) == b"abcd"


def test_abort_discards_partial():
    r = Reassembler(8192)
    r.feed(chunk(b"C", b"ab"))
    assert r.feed(chunk(b"A", b"")) is None
    assert r.occupancy == 0
    assert r.feed(chunk(b"F", b"xy", rid=2)) == b"xy"


def test_over_stage_buffer_is_too_large():
    r = Reassembler(8192)
    r.feed(chunk(b"C", b"x" * 8000))
    with pytest.raises(MessageTooLarge) as exc:
        r.feed(chunk(b"F", b"x" * 193))
    assert exc.value.status == StatusCode.BadTcpMessageTooLarge
    assert r.occupancy == 0


def test_exactly_stage_buffer_fits():
    r = Reassembler(8192)
    r.feed(chunk(b"C", b"x" * 8000))
    assert len(r.feed(chunk(b"F", b"x" * 192))) == 8192


def test_too_large_drops_rest_of_request():
    r = Reassembler(100)
    with pytest.raises(MessageTooLarge):
        r.feed(chunk(b"C", b"x" * 101))
    assert r.feed(chunk(b"C", b"y")) is None
    assert r.feed(chunk(b"F", b"y")) is None
    assert r.feed(chunk(b"F", b"ok", rid=2)) == b"ok"


def test_chunk_count_limit():
    r = Reassembler(8192, max_chunk_count=2)
    r.feed(chunk(b"C", b"a"))
    r.feed(chunk(b"C", b"b"))
    with pytest.raises(MessageTooLarge):
        r.feed(chunk(b"F", b"c"))


def test_interleaved_requests_rejected():
    r = Reassembler(8192)
    r.feed(chunk(b"C", b"a", rid=1))
    with pytest.raises(TransportError) as exc:
        r.feed(chunk(b"F", b"b", rid=2))
    assert exc.value.status == StatusCode.BadSequenceNumberInvalid


def test_pool_bounds_reassembly():
    pool = BufferPool(100)
    r = Reassembler(8192, pool=pool)
    r.feed(chunk(b"C", b"x" * 60))
    assert pool.used == 60
    with pytest.raises(MessageTooLarge) as exc:
        r.feed(chunk(b"F", b"x" * 60))
    assert exc.value.status == StatusCode.BadTcpNotEnoughResources
    assert pool.used == 0


def test_pool_holds_message_until_released():
    pool = BufferPool(100)
    r = Reassembler(8192, pool=pool)
    assert r.feed(chunk(b"F", b"x" * 40)) == b"x" * 40
    assert pool.used == 40
    r.release_message()
    assert pool.used == 0


def test_frame_splitter_rejects_oversize_header():
    s = FrameSplitter(8192)
    with pytest.raises(TransportError):
        s.feed(b"MSGF" + struct.pack("<I", 8193))


# --- oversize requests through a full engine keep the channel -------------------


def test_oversize_request_faults_and_keeps_channel():
    eng = EngineCore()
    c = FrameClient(eng.connect()).connect()
    c.session()
    # a Read with enough nodes to span more than the 8 KiB stage buffer
    nodes = [ua.NodeId(1003, 1)] * 600
    params = ua.ReadParameters(NodesToRead=[ua.ReadValueId(NodeId=n, AttributeId=13) for n in nodes])
    replies = c.send(c.frames_for(ua.ReadRequest(Parameters=params)))
    from uaclient import decode_response

    fault = decode_response(replies[-1].body())
    assert fault.ResponseHeader.ServiceResult.value == StatusCode.BadTcpMessageTooLarge
    assert not c.tc.closed
    assert c.read(ua.NodeId(1003, 1)).Results[0].StatusCode.is_good()
