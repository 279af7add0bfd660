"""Transport stage: OPC UA TCP framing and the secure-channel state machine."""

from .channel import (
    ChannelIdAllocator,
    ConnState,
    MessageHandler,
    Processed,
    ServerCapabilities,
    TransportConnection,
)
from .chunks import (
    HEADER_SIZE,
    MIN_BUFFER_SIZE,
    SECURITY_POLICY_NONE,
    SYMMETRIC_OVERHEAD,
    AsymmetricHeader,
    FrameSplitter,
    Hello,
    MessageChunk,
    MessageTooLarge,
    Reassembler,
    TransportError,
    TransportLimits,
    decode_acknowledge,
    decode_chunk,
    decode_error,
    decode_hello,
    encode_acknowledge,
    encode_chunk,
    encode_error,
    encode_hello,
    max_body_size,
    read_header,
    split_into_chunks,
)

__all__ = [
    "AsymmetricHeader",
    "ChannelIdAllocator",
    "ConnState",
    "FrameSplitter",
    "HEADER_SIZE",
    "Hello",
    "MIN_BUFFER_SIZE",
    "MessageChunk",
    "MessageHandler",
    "MessageTooLarge",
    "Processed",
    "Reassembler",
    "SECURITY_POLICY_NONE",
    "SYMMETRIC_OVERHEAD",
    "ServerCapabilities",
    "TransportConnection",
    "TransportError",
    "TransportLimits",
    "decode_acknowledge",
    "decode_chunk",
    "decode_error",
    "decode_hello",
    "encode_acknowledge",
    "encode_chunk",
    "encode_error",
    "encode_hello",
    "max_body_size",
    "read_header",
    "split_into_chunks",
]
