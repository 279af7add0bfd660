"""Engine composition and the deterministic cycle simulator."""

from .arbiter import RoundRobinArbiter, max_grant_gaps, schedule_step
from .capture import Capture, CaptureMalformed, CaptureWriter, Record, read_capture, write_capture
from .clocks import ENGINE_FREQUENCIES, MEM_FREQ, ClockConfig
from .core import SIM_EPOCH, EngineCore, capabilities_for
from .sim import BufferBudgetExceeded, SimResult, Simulator, run_trace
from .trace import ACTIVE, IDLE, STALLED, CycleTrace, EmptyWindow, NoSuchRequest, RequestMarker, parse_summary

__all__ = [
    "ACTIVE",
    "BufferBudgetExceeded",
    "Capture",
    "CaptureMalformed",
    "CaptureWriter",
    "ClockConfig",
    "CycleTrace",
    "ENGINE_FREQUENCIES",
    "EmptyWindow",
    "EngineCore",
    "IDLE",
    "MEM_FREQ",
    "NoSuchRequest",
    "Record",
    "RequestMarker",
    "RoundRobinArbiter",
    "SIM_EPOCH",
    "STALLED",
    "SimResult",
    "Simulator",
    "capabilities_for",
    "max_grant_gaps",
    "parse_summary",
    "read_capture",
    "run_trace",
    "schedule_step",
    "write_capture",
]
