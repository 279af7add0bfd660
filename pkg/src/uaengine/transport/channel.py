"""Per-connection transport stage: Hello, secure channel and message routing.

Error table:

* framing, Hello/Acknowledge and channel identity violations: ERR, connection closed
* sequence number violations: ERR, channel (and with it the connection) closed
* a single oversized request: ServiceFault, channel kept open
"""

from __future__ import annotations

import enum
import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from ..codec import (
    CodecError,
    ServiceMessage,
    StatusCode,
    decode_message,
    encode_message,
    make_struct,
    peek_message_type,
    response_header,
    service_fault,
)
from .chunks import (
    SECURITY_POLICY_NONE,
    AsymmetricHeader,
    FrameSplitter,
    MessageChunk,
    MessageTooLarge,
    Reassembler,
    TransportError,
    TransportLimits,
    decode_chunk,
    decode_hello,
    encode_acknowledge,
    encode_error,
    split_into_chunks,
)

log = logging.getLogger(__name__)

MAX_CHANNEL_LIFETIME_MS = 3_600_000
SECURITY_MODE_NONE = 1
REQUEST_ISSUE, REQUEST_RENEW = 0, 1


class ChannelIdAllocator:
    """Hands out increasing channel ids; never reuses one for its lifetime."""

    def __init__(self, start: int = 1):
        self._ids = itertools.count(start)
        self._lock = threading.Lock()

    def allocate(self) -> int:
        with self._lock:
            return next(self._ids)


class MessageHandler(Protocol):
    def handle_message(self, channel_id: int, request: bytes) -> tuple[bytes, Any]:
        """Process one reassembled message; returns the response and a work record."""

    def channel_closed(self, channel_id: int) -> None: ...


class ConnState(enum.Enum):
    PRE_HELLO = "pre-hello"
    CHANNEL_PENDING = "channel-pending"
    OPEN = "open"
    CLOSED = "closed"


@dataclass
class Processed:
    """One reassembled request and what was sent back for it."""

    request_id: int
    request_size: int
    response_size: int
    chunks_in: int
    chunks_out: int
    work: Any = None


@dataclass
class ServerCapabilities:
    limits: TransportLimits = field(default_factory=TransportLimits)
    min_protocol_version: int = 0
    message_buffer: int = 8192
    # optional shared byte budget (reserve/release) across all connections
    pool: Any = None


class TransportConnection:
    def __init__(
        self,
        handler: MessageHandler,
        channel_ids: ChannelIdAllocator,
        clock: Callable[[], int],
        capabilities: ServerCapabilities | None = None,
    ):
        self.handler = handler
        self.channel_ids = channel_ids
        self.clock = clock
        self.caps = capabilities or ServerCapabilities()
        self.state = ConnState.PRE_HELLO
        self.limits: TransportLimits | None = None
        self.splitter = FrameSplitter(self.caps.limits.receive_buffer_size)
        self.reassembler = Reassembler(self.caps.message_buffer, pool=self.caps.pool)
        self.channel_id = 0
        self.token_id = 0
        self.send_sequence = 1
        self.recv_sequence: int | None = None
        self.chunks_in = 0
        self.processed: list[Processed] = []
        self.close_reason: StatusCode | None = None

    @property
    def closed(self) -> bool:
        return self.state is ConnState.CLOSED

    # --- entry points ----------------------------------------------------------

    def receive(self, data: bytes) -> list[bytes]:
        """Feed raw bytes from the peer; returns frames to send back."""
        if self.closed:
            return []
        try:
            frames = self.splitter.feed(data)
        except TransportError as exc:
            return self._fail(exc)
        out: list[bytes] = []
        for frame in frames:
            out += self.receive_frame(frame)
            if self.closed:
                break
        return out

    def receive_frame(self, frame: bytes) -> list[bytes]:
        if self.closed:
            return []
        try:
            chunk = decode_chunk(frame)
            mt = chunk.message_type
            if mt == b"HEL":
                return self._hello(chunk)
            if self.state is ConnState.PRE_HELLO:
                raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"{mt.decode()} before Hello")
            if mt == b"OPN":
                return self._open(chunk)
            if mt in (b"MSG", b"CLO"):
                return self._secure(chunk)
            raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"unexpected {mt.decode()} from client")
        except TransportError as exc:
            return self._fail(exc)

    def close(self) -> None:
        """Tear down: frees the channel and anything bound to it."""
        if self.closed:
            return
        self.state = ConnState.CLOSED
        self.reassembler.reset()
        self.reassembler.release_message()
        if self.channel_id:
            self.handler.channel_closed(self.channel_id)

    # --- connection level ---------------------------------------------------------

    def _fail(self, exc: TransportError) -> list[bytes]:
        log.info("event=transport_error status=%s reason=%r", exc.status.name, exc.reason)
        self.close_reason = exc.status
        frame = encode_error(exc.status, exc.reason)
        self.close()
        return [frame]

    def _hello(self, chunk: MessageChunk) -> list[bytes]:
        if self.state is not ConnState.PRE_HELLO:
            raise TransportError(StatusCode.BadTcpMessageTypeInvalid, "second Hello on this connection")
        hello = decode_hello(chunk.body)
        offer = hello.limits
        if offer.protocol_version < self.caps.min_protocol_version:
            raise TransportError(StatusCode.BadProtocolVersionUnsupported, f"version {offer.protocol_version}")
        if offer.receive_buffer_size < 8192 or offer.send_buffer_size < 8192:
            raise TransportError(StatusCode.BadTcpMessageTooLarge, "client buffers below 8192 bytes")
        self.limits = self.caps.limits.negotiate(offer)
        self.splitter.max_size = self.limits.receive_buffer_size
        self.reassembler.max_chunk_count = self.limits.max_chunk_count
        self.state = ConnState.CHANNEL_PENDING
        return [encode_acknowledge(self.limits)]

    # --- secure channel ---------------------------------------------------------------

    def _check_sequence(self, chunk: MessageChunk) -> None:
        if self.recv_sequence is not None and chunk.sequence_number != self.recv_sequence + 1:
            raise TransportError(
                StatusCode.BadSequenceNumberInvalid,
                f"expected {self.recv_sequence + 1}, got {chunk.sequence_number}",
            )
        self.recv_sequence = chunk.sequence_number

    def _open(self, chunk: MessageChunk) -> list[bytes]:
        sec = chunk.security
        if sec is None or sec.policy_uri != SECURITY_POLICY_NONE:
            raise TransportError(StatusCode.BadSecurityPolicyRejected, f"policy {sec.policy_uri if sec else None}")
        if chunk.chunk_flag != b"F":
            raise TransportError(StatusCode.BadTcpMessageTypeInvalid, "OPN must be a single chunk")
        try:
            req = decode_message(chunk.body)
        except CodecError as exc:
            raise TransportError(StatusCode.BadDecodingError, f"OpenSecureChannel: {exc}") from None
        if req.name != "OpenSecureChannelRequest":
            raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"{req.name} in OPN")
        if req["SecurityMode"] != SECURITY_MODE_NONE:
            raise TransportError(StatusCode.BadSecurityModeRejected, f"mode {req['SecurityMode']}")
        kind = req["RequestType"]
        if kind == REQUEST_ISSUE:
            if self.state is not ConnState.CHANNEL_PENDING:
                raise TransportError(StatusCode.BadTcpMessageTypeInvalid, "channel already open")
            self.channel_id = self.channel_ids.allocate()
        elif kind == REQUEST_RENEW:
            if self.state is not ConnState.OPEN or chunk.secure_channel_id != self.channel_id:
                raise TransportError(StatusCode.BadTcpSecureChannelUnknown, "renew of an unknown channel")
        else:
            raise TransportError(StatusCode.BadTcpMessageTypeInvalid, f"request type {kind}")
        self._check_sequence(chunk)
        self.token_id += 1
        self.state = ConnState.OPEN
        requested = req["RequestedLifetime"]
        lifetime = MAX_CHANNEL_LIFETIME_MS if requested == 0 else min(requested, MAX_CHANNEL_LIFETIME_MS)
        now = self.clock()
        token = make_struct("ChannelSecurityToken", ChannelId=self.channel_id, TokenId=self.token_id, CreatedAt=now, RevisedLifetime=lifetime)
        resp = ServiceMessage.new(
            "OpenSecureChannelResponse",
            ResponseHeader=response_header(req["RequestHeader"]["RequestHandle"], 0, now),
            ServerProtocolVersion=self.limits.protocol_version,
            SecurityToken=token,
            ServerNonce=b"",
        )
        out = MessageChunk(
            b"OPN", b"F", self.channel_id, self.send_sequence, chunk.request_id, encode_message(resp),
            security=AsymmetricHeader(SECURITY_POLICY_NONE, None, None),
        )
        self.send_sequence += 1
        return [out.encode()]

    def _secure(self, chunk: MessageChunk) -> list[bytes]:
        if self.state is not ConnState.OPEN or chunk.secure_channel_id != self.channel_id:
            raise TransportError(StatusCode.BadTcpSecureChannelUnknown, f"channel {chunk.secure_channel_id}")
        if chunk.token_id != self.token_id:
            raise TransportError(StatusCode.BadSecureChannelTokenUnknown, f"token {chunk.token_id}")
        self._check_sequence(chunk)
        if chunk.message_type == b"CLO":
            self.close()
            return []
        self.chunks_in += 1
        try:
            request = self.reassembler.feed(chunk)
        except MessageTooLarge as exc:
            n_in, self.chunks_in = self.chunks_in, 0
            return self._respond(exc.request_id, self._fault(exc.head, exc.status), n_in, exc.head, None, 0)
        if request is None:
            if chunk.chunk_flag == b"A":
                self.chunks_in = 0
            return []
        n_in, self.chunks_in = self.chunks_in, 0
        try:
            response, work = self.handler.handle_message(self.channel_id, request)
            return self._respond(chunk.request_id, response, n_in, request, work, len(request))
        finally:
            self.reassembler.release_message()

    # --- responses ------------------------------------------------------------------

    def _fault(self, request_head: bytes, status: StatusCode) -> bytes:
        _, header = peek_message_type(request_head)
        handle = header["RequestHandle"] if header else 0
        return encode_message(service_fault(status, handle, self.clock()))

    def _respond(self, request_id: int, response: bytes, n_in: int, request_head: bytes, work, request_size: int) -> list[bytes]:
        try:
            chunks = split_into_chunks(response, self.limits, b"MSG", self.channel_id, self.token_id, request_id, self.send_sequence)
        except TransportError:
            response = self._fault(request_head, StatusCode.BadResponseTooLarge)
            chunks = split_into_chunks(response, self.limits, b"MSG", self.channel_id, self.token_id, request_id, self.send_sequence)
        self.send_sequence += len(chunks)
        self.processed.append(Processed(request_id, request_size, len(response), n_in, len(chunks), work))
        return [c.encode() for c in chunks]
