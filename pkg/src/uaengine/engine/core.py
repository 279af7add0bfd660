"""Functional composition: transport stage in front of the S3 stages."""

from __future__ import annotations

from typing import Callable

from ..asm import bundled_program
from ..nsimage import NamespaceImage, build_default_image
from ..s3 import BufferPool, EngineConfig, S3Manager
from ..streamvm import VmProgram
from ..transport import ChannelIdAllocator, ServerCapabilities, TransportConnection, TransportLimits

# DateTime of the simulated clock's cycle zero: 2024-01-01T00:00:00Z
SIM_EPOCH = 133_485_408_000_000_000


def capabilities_for(config: EngineConfig, pool: BufferPool | None = None) -> ServerCapabilities:
    size = config.buffer_bytes_per_stage
    limits = TransportLimits(0, size, size, size, config.chunk_limit)
    return ServerCapabilities(limits, message_buffer=size, pool=pool)


class EngineCore:
    """One engine instance: a channel-id counter, the S3 stages and their image.

    ``connect()`` returns a fresh transport stage for a new TCP connection.
    Everything shares ``clock``, which returns DateTime ticks (100 ns).
    """

    def __init__(
        self,
        config: EngineConfig | None = None,
        clock: Callable[[], int] | None = None,
        image: NamespaceImage | None = None,
        program: VmProgram | None = None,
        seed: bytes | None = None,
        pool: BufferPool | None = None,
        record_vm: bool = False,
    ):
        self.config = config or EngineConfig()
        self.clock = clock or (lambda: SIM_EPOCH)
        self.image = image if image is not None else build_default_image()
        self.program = program if program is not None else bundled_program()
        self.pool = pool
        self.s3 = S3Manager(self.config, self.image, self.program, self.clock, seed, pool, record_vm)
        self.channel_ids = ChannelIdAllocator()
        self.capabilities = capabilities_for(self.config, pool)

    def connect(self) -> TransportConnection:
        return TransportConnection(self.s3, self.channel_ids, self.clock, self.capabilities)
