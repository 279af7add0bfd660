"""Server configuration: a line-oriented ``key = value`` file."""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..s3 import ConfigError as EngineConfigError
from ..s3 import EngineConfig


class ConfigError(ValueError):
    pass


LOG_LEVELS = ("debug", "info", "warning", "error")


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 4840
    engine: EngineConfig = field(default_factory=EngineConfig)
    image_path: str | None = None  # compiled .nsim; None means the bundled model
    program_path: str | None = None  # assembled .uavm; None means the bundled programs
    max_connections: int = 16
    idle_timeout_s: float = 120.0
    log_level: str = "info"

    def __post_init__(self):
        if not 0 < self.port <= 65535:
            raise ConfigError(f"port {self.port} outside (0, 65535]")
        if self.max_connections < 1:
            raise ConfigError("max_connections must be at least 1")
        if self.idle_timeout_s <= 0:
            raise ConfigError("idle_timeout_s must be positive")
        if self.log_level not in LOG_LEVELS:
            raise ConfigError(f"log_level must be one of {', '.join(LOG_LEVELS)}")
        for p in (self.image_path, self.program_path):
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{p}: no such file")

    @property
    def endpoint_url(self) -> str:
        return self.engine.endpoint_url

    @property
    def logging_level(self) -> int:
        return getattr(logging, self.log_level.upper())


_SERVER_KEYS = {
    "host": str,
    "port": int,
    "image": str,
    "program": str,
    "max_connections": int,
    "idle_timeout_s": float,
    "log_level": str,
}
_ENGINE_KEYS = {
    "num_stages": int,
    "buffer_bytes_per_stage": int,
    "total_buffer_bytes": int,
    "max_chunk_count": int,
    "min_session_timeout_ms": float,
    "max_session_timeout_ms": float,
    "vm_budget": int,
}


def parse_config(text: str, base: str | os.PathLike = ".") -> ServerConfig:
    """Parse config text; relative file paths resolve against ``base``."""
    server: dict = {}
    engine: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        try:
            if key in _SERVER_KEYS:
                server[key] = _SERVER_KEYS[key](value)
            elif key in _ENGINE_KEYS:
                engine[key] = _ENGINE_KEYS[key](value)
            elif key == "features":
                engine["features"] = frozenset(v.strip() for v in value.split(",") if v.strip())
            elif key == "endpoint_url":
                engine["endpoint_url"] = value
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    for k in ("image", "program"):
        if k in server:
            server[f"{k}_path"] = str(Path(base) / server.pop(k))
    try:
        eng = EngineConfig(**engine)
    except EngineConfigError as exc:
        raise ConfigError(str(exc)) from None
    if "endpoint_url" not in engine:
        host = server.get("host", ServerConfig.host)
        port = server.get("port", ServerConfig.port)
        eng = dataclasses.replace(eng, endpoint_url=f"opc.tcp://{host}:{port}/")
    return ServerConfig(engine=eng, **server)


def load_config(path: str | os.PathLike) -> ServerConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: {exc.strerror}") from None
    return parse_config(text, p.parent)
