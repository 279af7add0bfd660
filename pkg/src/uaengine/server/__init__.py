"""Live opc.tcp front end, configuration and capture record/replay."""

from .app import StartupError, UaServer, load_artifacts, wall_clock
from .config import ConfigError, ServerConfig, load_config, parse_config
from .replay import Divergence, ReplayReport, compare_message, diff_values, replay

__all__ = [
    "ConfigError",
    "Divergence",
    "ReplayReport",
    "ServerConfig",
    "StartupError",
    "UaServer",
    "compare_message",
    "diff_values",
    "load_artifacts",
    "load_config",
    "parse_config",
    "replay",
    "wall_clock",
]
