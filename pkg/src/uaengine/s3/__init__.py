"""S3 stages: sessions, segmentation buffers and service dispatch."""

from .config import FEATURES, ConfigError, EngineConfig
from .manager import ANONYMOUS_POLICY_ID, READ_REQUEST, WRITE_REQUEST, S3Manager, ServiceError, Work
from .stage import BufferPool, IllegalTransition, S3Stage, StageState

__all__ = [
    "ANONYMOUS_POLICY_ID",
    "BufferPool",
    "ConfigError",
    "EngineConfig",
    "FEATURES",
    "IllegalTransition",
    "READ_REQUEST",
    "S3Manager",
    "S3Stage",
    "ServiceError",
    "StageState",
    "WRITE_REQUEST",
    "Work",
]
