"""Design-time configuration of the engine."""

from __future__ import annotations

from dataclasses import dataclass, field

FEATURES = frozenset({"fragmentation", "multiSession"})


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    num_stages: int = 3
    buffer_bytes_per_stage: int = 8192
    total_buffer_bytes: int = 24 * 1024
    max_chunk_count: int = 4
    features: frozenset = field(default=FEATURES)
    min_session_timeout_ms: float = 10_000.0
    max_session_timeout_ms: float = 3_600_000.0
    vm_budget: int = 1_000_000
    endpoint_url: str = "opc.tcp://localhost:4840/"

    def __post_init__(self):
        if self.num_stages < 1:
            raise ConfigError("num_stages must be at least 1")
        if self.buffer_bytes_per_stage < 8192:
            raise ConfigError("buffer_bytes_per_stage must be at least 8192")
        if self.num_stages * self.buffer_bytes_per_stage > self.total_buffer_bytes:
            raise ConfigError(
                f"{self.num_stages} x {self.buffer_bytes_per_stage} bytes exceeds the "
                f"{self.total_buffer_bytes}-byte buffer memory"
            )
        unknown = set(self.features) - FEATURES
        if unknown:
            raise ConfigError(f"unknown feature flags {sorted(unknown)}")
        if not self.min_session_timeout_ms <= self.max_session_timeout_ms:
            raise ConfigError("session timeout bounds are inverted")

    @property
    def fragmentation(self) -> bool:
        return "fragmentation" in self.features

    @property
    def multi_session(self) -> bool:
        return "multiSession" in self.features

    @property
    def session_slots(self) -> int:
        return self.num_stages if self.multi_session else 1

    @property
    def chunk_limit(self) -> int:
        return self.max_chunk_count if self.fragmentation else 1
