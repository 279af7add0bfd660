"""OPC UA TCP framing: connection messages, chunk headers, split and reassembly."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from ..codec import CodecError, Reader, StatusCode
from ..codec.binary import read_bytestring, read_string, write_bytestring, write_string

HEADER = struct.Struct("<3scI")
HEADER_SIZE = HEADER.size  # 8
SEQUENCE_HEADER = struct.Struct("<II")
MIN_BUFFER_SIZE = 8192

MESSAGE_TYPES = (b"HEL", b"ACK", b"ERR", b"RHE", b"OPN", b"CLO", b"MSG")
CONNECTION_TYPES = (b"HEL", b"ACK", b"ERR", b"RHE")
CHUNK_FLAGS = (b"C", b"F", b"A")

SECURITY_POLICY_NONE = "http://opcfoundation.org/UA/SecurityPolicy#None"

# header + channel id + token id + sequence header
SYMMETRIC_OVERHEAD = HEADER_SIZE + 4 + 4 + SEQUENCE_HEADER.size


class TransportError(Exception):
    """A protocol violation, reported to the peer as ERR or a service fault."""

    def __init__(self, status: StatusCode, reason: str = ""):
        super().__init__(f"{status.name}: {reason}" if reason else status.name)
        self.status = status
        self.reason = reason


@dataclass
class TransportLimits:
    protocol_version: int = 0
    receive_buffer_size: int = MIN_BUFFER_SIZE
    send_buffer_size: int = MIN_BUFFER_SIZE
    max_message_size: int = MIN_BUFFER_SIZE
    max_chunk_count: int = 4

    def negotiate(self, offer: TransportLimits) -> TransportLimits:
        """Element-wise minimum, where 0 in the offer means "no limit"."""

        def low(ours: int, theirs: int) -> int:
            return ours if theirs == 0 else min(ours, theirs)

        return TransportLimits(
            protocol_version=min(self.protocol_version, offer.protocol_version),
            # our receive buffer is bounded by what the client can send, and vice versa
            receive_buffer_size=min(self.receive_buffer_size, offer.send_buffer_size),
            send_buffer_size=min(self.send_buffer_size, offer.receive_buffer_size),
            max_message_size=low(self.max_message_size, offer.max_message_size),
            max_chunk_count=low(self.max_chunk_count, offer.max_chunk_count),
        )


@dataclass
class Hello:
    limits: TransportLimits
    endpoint_url: str | None = None


@dataclass
class AsymmetricHeader:
    policy_uri: str | None = SECURITY_POLICY_NONE
    sender_certificate: bytes | None = None
    receiver_thumbprint: bytes | None = None


@dataclass
class MessageChunk:
    message_type: bytes
    chunk_flag: bytes = b"F"
    secure_channel_id: int | None = None
    sequence_number: int = 0
    request_id: int = 0
    body: bytes = b""
    # OPN carries an asymmetric security header, CLO/MSG a token id
    security: AsymmetricHeader | None = None
    token_id: int = 0
    message_size: int = field(default=0, compare=False)

    def encode(self) -> bytes:
        return encode_chunk(self)


# --- connection messages ---------------------------------------------------------


def _limits_fields(limits: TransportLimits) -> bytes:
    return struct.pack(
        "<IIIII",
        limits.protocol_version,
        limits.receive_buffer_size,
        limits.send_buffer_size,
        limits.max_message_size,
        limits.max_chunk_count,
    )


def encode_hello(hello: Hello) -> bytes:
    body = bytearray(_limits_fields(hello.limits))
    write_string(body, hello.endpoint_url)
    return _frame(b"HEL", b"F", bytes(body))


def encode_acknowledge(limits: TransportLimits) -> bytes:
    return _frame(b"ACK", b"F", _limits_fields(limits))


def encode_error(status: int, reason: str | None = None) -> bytes:
    body = bytearray(struct.pack("<I", status))
    write_string(body, reason)
    return _frame(b"ERR", b"F", bytes(body))


_U32 = struct.Struct("<I")


def _read_limits(r: Reader) -> TransportLimits:
    return TransportLimits(*(r.unpack(_U32) for _ in range(5)))


def decode_hello(body: bytes) -> Hello:
    r = Reader(body)
    try:
        limits = _read_limits(r)
        url = read_string(r)
    except CodecError as exc:
        raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"malformed Hello: {exc}") from None
    if r.remaining:
        raise TransportError(StatusCode.BadTcpMessageTypeInvalid, "trailing bytes after Hello")
    return Hello(limits, url)


def decode_acknowledge(body: bytes) -> TransportLimits:
    r = Reader(body)
    try:
        return _read_limits(r)
    except CodecError as exc:
        raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"malformed Acknowledge: {exc}") from None


def decode_error(body: bytes) -> tuple[int, str | None]:
    r = Reader(body)
    try:
        return r.unpack(_U32), read_string(r)
    except CodecError as exc:
        raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"malformed Error: {exc}") from None


# --- chunks -------------------------------------------------------------------------


def _frame(message_type: bytes, flag: bytes, payload: bytes) -> bytes:
    return HEADER.pack(message_type, flag, HEADER_SIZE + len(payload)) + payload


def encode_chunk(chunk: MessageChunk) -> bytes:
    mt = chunk.message_type
    if mt in CONNECTION_TYPES:
        return _frame(mt, chunk.chunk_flag, chunk.body)
    payload = bytearray(struct.pack("<I", chunk.secure_channel_id or 0))
    if mt == b"OPN":
        sec = chunk.security or AsymmetricHeader()
        write_string(payload, sec.policy_uri)
        write_bytestring(payload, sec.sender_certificate)
        write_bytestring(payload, sec.receiver_thumbprint)
    else:
        payload += struct.pack("<I", chunk.token_id)
    payload += SEQUENCE_HEADER.pack(chunk.sequence_number, chunk.request_id)
    payload += chunk.body
    return _frame(mt, chunk.chunk_flag, bytes(payload))


def read_header(data: bytes) -> tuple[bytes, bytes, int]:
    """Validate the 8-byte header; returns (type, flag, size)."""
    if len(data) < HEADER_SIZE:
        raise TransportError(StatusCode.BadTcpMessageTypeInvalid, "short header")
    mt, flag, size = HEADER.unpack_from(data)
    if mt not in MESSAGE_TYPES:
        raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"message type {mt!r}")
    if flag not in CHUNK_FLAGS or (mt in CONNECTION_TYPES and flag != b"F"):
        raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"chunk flag {flag!r} for {mt.decode('latin-1')}")
    if size < HEADER_SIZE:
        raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"message size {size}")
    return mt, flag, size


def decode_chunk(frame: bytes) -> MessageChunk:
    mt, flag, size = read_header(frame)
    if size != len(frame):
        raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"size field {size} != frame length {len(frame)}")
    if mt in CONNECTION_TYPES:
        return MessageChunk(mt, flag, body=frame[HEADER_SIZE:], message_size=size)
    r = Reader(frame, pos=HEADER_SIZE)
    try:
        channel_id = r.unpack(_U32)
        security = None
        token_id = 0
        if mt == b"OPN":
            security = AsymmetricHeader(read_string(r), read_bytestring(r), read_bytestring(r))
        else:
            token_id = r.unpack(_U32)
        seq, req = SEQUENCE_HEADER.unpack(r.take(SEQUENCE_HEADER.size))
    except CodecError as exc:
        raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"malformed {mt.decode()} header: {exc}") from None
    return MessageChunk(mt, flag, channel_id, seq, req, frame[r.pos:], security, token_id, size)


class FrameSplitter:
    """Cuts a TCP byte stream into frames, refusing any frame above ``max_size``."""

    def __init__(self, max_size: int):
        self.max_size = max_size
        self.buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self.buf += data
        frames = []
        while len(self.buf) >= HEADER_SIZE:
            _, _, size = read_header(bytes(self.buf[:HEADER_SIZE]))
            if size > self.max_size:
                raise TransportError(StatusCode.BadTcpMessageTooLarge, f"chunk of {size} bytes exceeds {self.max_size}")
            if len(self.buf) < size:
                break
            frames.append(bytes(self.buf[:size]))
            del self.buf[:size]
        return frames


def max_body_size(limits: TransportLimits, overhead: int = SYMMETRIC_OVERHEAD) -> int:
    return limits.send_buffer_size - overhead


def split_into_chunks(
    msg: bytes,
    limits: TransportLimits,
    message_type: bytes = b"MSG",
    secure_channel_id: int = 0,
    token_id: int = 0,
    request_id: int = 0,
    first_sequence: int = 1,
) -> list[MessageChunk]:
    """Maximal-fill chunks of ``msg``; sequence numbers count up from ``first_sequence``."""
    if limits.max_message_size and len(msg) > limits.max_message_size:
        raise TransportError(StatusCode.BadRequestTooLarge, f"message of {len(msg)} bytes exceeds {limits.max_message_size}")
    room = max_body_size(limits)
    if room <= 0:
        raise TransportError(StatusCode.BadTcpInternalError, "send buffer smaller than chunk overhead")
    count = max(1, -(-len(msg) // room))
    if limits.max_chunk_count and count > limits.max_chunk_count:
        raise TransportError(StatusCode.BadRequestTooLarge, f"{count} chunks exceed the limit of {limits.max_chunk_count}")
    chunks = []
    for i in range(count):
        body = msg[i * room:(i + 1) * room]
        chunks.append(
            MessageChunk(
                message_type,
                b"F" if i == count - 1 else b"C",
                secure_channel_id,
                first_sequence + i,
                request_id,
                body,
                token_id=token_id,
            )
        )
    return chunks


class MessageTooLarge(TransportError):
    """Raised by the reassembler; ``head`` is the first chunk body, kept for the fault reply."""

    def __init__(self, reason: str, request_id: int, head: bytes, status: StatusCode = StatusCode.BadTcpMessageTooLarge):
        super().__init__(status, reason)
        self.request_id = request_id
        self.head = head


class Reassembler:
    """Collects the chunks of one message at a time.

    ``capacity`` is the message buffer the message is assembled into; exceeding
    it or ``max_chunk_count`` raises MessageTooLarge and the remaining chunks
    of that request are dropped up to its final chunk.

    With a ``pool`` (anything with ``reserve(n) -> bool`` and ``release(n)``)
    every chunk body is reserved from it before it is kept. A completed
    message stays reserved until ``release_message`` is called.
    """

    def __init__(self, capacity: int, max_chunk_count: int = 0, pool=None):
        self.capacity = capacity
        self.max_chunk_count = max_chunk_count
        self.pool = pool
        self.parts: list[bytes] = []
        self.size = 0
        self.held = 0
        self.request_id: int | None = None
        self.discarding: int | None = None

    @property
    def occupancy(self) -> int:
        return self.size + self.held

    def reset(self) -> None:
        if self.pool is not None and self.size:
            self.pool.release(self.size)
        self.parts.clear()
        self.size = 0
        self.request_id = None

    def release_message(self) -> None:
        if self.pool is not None and self.held:
            self.pool.release(self.held)
        self.held = 0

    def feed(self, chunk: MessageChunk) -> bytes | None:
        """Return the complete message on the final chunk, else None."""
        if self.discarding is not None:
            if chunk.request_id == self.discarding:
                if chunk.chunk_flag != b"C":
                    self.discarding = None
                return None
            self.discarding = None
        if self.request_id is not None and chunk.request_id != self.request_id:
            self.reset()
            raise TransportError(StatusCode.BadSequenceNumberInvalid, "chunks of different requests interleaved")
        if chunk.chunk_flag == b"A":
            self.reset()
            return None
        size = self.size + len(chunk.body)
        count = len(self.parts) + 1
        if size > self.capacity or (self.max_chunk_count and count > self.max_chunk_count):
            head = self.parts[0] if self.parts else chunk.body
            self.reset()
            if chunk.chunk_flag == b"C":
                self.discarding = chunk.request_id
            reason = f"{size} bytes in {count} chunks exceed the {self.capacity}-byte message buffer"
            if size <= self.capacity:
                reason = f"{count} chunks exceed the limit of {self.max_chunk_count}"
            raise MessageTooLarge(reason, chunk.request_id, head)
        if self.pool is not None and not self.pool.reserve(len(chunk.body)):
            head = self.parts[0] if self.parts else chunk.body
            self.reset()
            if chunk.chunk_flag == b"C":
                self.discarding = chunk.request_id
            raise MessageTooLarge("shared buffer memory exhausted", chunk.request_id, head, StatusCode.BadTcpNotEnoughResources)
        self.request_id = chunk.request_id
        self.size = size
        self.parts.append(chunk.body)
        if chunk.chunk_flag == b"C":
            return None
        msg = b"".join(self.parts)
        # hand the reservation over to the completed message
        self.held += self.size
        self.size = 0
        self.reset()
        return msg
