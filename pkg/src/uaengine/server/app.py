"""Live opc.tcp listener driving the engine core in real time."""

from __future__ import annotations

import asyncio
import logging
import os
import time

from ..codec import StatusCode
from ..engine.capture import CaptureWriter
from ..engine.core import EngineCore
from ..nsimage import ImageError, NamespaceImage, build_default_image
from ..s3 import BufferPool
from ..streamvm import ProgramFormatError, VmProgram
from ..transport import encode_error
from .config import ServerConfig

log = logging.getLogger("uaengine.server")

# DateTime ticks between 1601-01-01 and the Unix epoch
_UNIX_EPOCH_TICKS = 116_444_736_000_000_000
READ_SIZE = 65536


def wall_clock() -> int:
    return _UNIX_EPOCH_TICKS + time.time_ns() // 100


class StartupError(Exception):
    pass


def load_artifacts(cfg: ServerConfig):
    """Namespace image and VM program named by the config, verified."""
    from ..asm import bundled_program

    try:
        image = NamespaceImage.from_file(cfg.image_path) if cfg.image_path else build_default_image()
    except (OSError, ImageError) as exc:
        raise StartupError(f"namespace image: {exc}") from None
    try:
        if cfg.program_path:
            with open(cfg.program_path, "rb") as fh:
                program = VmProgram.from_bytes(fh.read(), os.path.basename(cfg.program_path))
        else:
            program = bundled_program()
    except (OSError, ProgramFormatError) as exc:
        raise StartupError(f"VM program: {exc}") from None
    return image, program


class UaServer:
    """One engine behind a TCP listener.

    All connection handlers run on one event loop and call into the
    synchronous engine core, so the stage allocator and value slots see one
    caller at a time.
    """

    def __init__(
        self,
        cfg: ServerConfig,
        record_dir: str | os.PathLike | None = None,
        seed: bytes | None = None,
        listen_port: int | None = None,
    ):
        """``listen_port`` overrides the configured port; 0 picks a free one."""
        self.cfg = cfg
        self.listen_port = cfg.port if listen_port is None else listen_port
        image, program = load_artifacts(cfg)
        self.pool = BufferPool(cfg.engine.total_buffer_bytes)
        if record_dir is not None and seed is None:
            seed = os.urandom(16)
        self.engine = EngineCore(cfg.engine, wall_clock, image, program, seed, self.pool)
        self.recorder = None
        if record_dir is not None:
            meta = {"seed": self.engine.s3.seed.hex(), "endpoint_url": cfg.endpoint_url}
            self.recorder = CaptureWriter(record_dir, meta)
        self._server: asyncio.base_events.Server | None = None
        self._conn_ids = 0
        self._live: dict[int, tuple] = {}
        self.port: int | None = None

    # --- lifecycle -----------------------------------------------------------

    async def start(self) -> None:
        try:
            self._server = await asyncio.start_server(self._handle, self.cfg.host, self.listen_port)
        except OSError as exc:
            raise StartupError(f"cannot listen on {self.cfg.host}:{self.listen_port}: {exc.strerror}") from None
        self.port = self._server.sockets[0].getsockname()[1]
        log.info("event=listening host=%s port=%d endpoint=%s", self.cfg.host, self.port, self.cfg.endpoint_url)

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        try:
            await self._server.serve_forever()
        except asyncio.CancelledError:
            pass

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
        for tc, writer in list(self._live.values()):
            tc.close()
            writer.close()
        if self._server is not None:
            await self._server.wait_closed()
        if self.recorder is not None:
            self.recorder.close()
            self.recorder = None
        log.info("event=stopped")

    async def __aenter__(self):
        await self.start()
        return self

    async def __aexit__(self, *exc):
        await self.stop()

    # --- connections -------------------------------------------------------------

    def _record(self, conn: int, direction: str, data: bytes) -> None:
        if self.recorder is not None:
            self.recorder.add(conn, direction, data)

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn = self._conn_ids
        self._conn_ids += 1
        peer = writer.get_extra_info("peername")
        if len(self._live) >= self.cfg.max_connections:
            log.warning("event=connection_rejected conn=%d peer=%s reason=max_connections", conn, peer)
            writer.write(encode_error(StatusCode.BadTcpNotEnoughResources, "too many connections"))
            await _close(writer)
            return
        tc = self.engine.connect()
        self._live[conn] = (tc, writer)
        log.info("event=connection_open conn=%d peer=%s", conn, peer)
        try:
            while not tc.closed:
                try:
                    data = await asyncio.wait_for(reader.read(READ_SIZE), self.cfg.idle_timeout_s)
                except asyncio.TimeoutError:
                    log.info("event=idle_timeout conn=%d", conn)
                    break
                if not data:
                    break
                self._record(conn, "in", data)
                if log.isEnabledFor(logging.DEBUG):
                    log.debug("event=rx conn=%d bytes=%d hex=%s", conn, len(data), data.hex())
                try:
                    frames = tc.receive(data)
                except Exception:
                    # never let one connection take the process down
                    log.exception("event=internal_error conn=%d", conn)
                    frames = [encode_error(StatusCode.BadInternalError, "internal error")]
                    tc.close()
                for frame in frames:
                    self._record(conn, "out", frame)
                    writer.write(frame)
                await writer.drain()
        except (ConnectionError, OSError) as exc:
            log.info("event=connection_error conn=%d error=%s", conn, exc)
        finally:
            tc.close()
            self._live.pop(conn, None)
            await _close(writer)
            log.info("event=connection_closed conn=%d reason=%s", conn, tc.close_reason.name if tc.close_reason else "peer")


async def _close(writer: asyncio.StreamWriter) -> None:
    writer.close()
    try:
        await writer.wait_closed()
    except (ConnectionError, OSError):
        pass
