"""Stream processor: a VM that moves OPC UA typed values between streams."""

from .isa import LENGTHS, Cond, IllegalOpcode, Instruction, Op, Tag, decode, iter_instructions
from .program import ProgramFormatError, VmProgram
from .scan import scan_length
from .streams import SCRATCH_CAPACITY, PortStream, Stream, make_streams
from .vm import NoEntryPoint, Outcome, RunResult, RunStats, Trap, TrapKind, Vm, run_service, typed_copy

__all__ = [
    "Cond",
    "IllegalOpcode",
    "Instruction",
    "LENGTHS",
    "NoEntryPoint",
    "Op",
    "Outcome",
    "PortStream",
    "ProgramFormatError",
    "RunResult",
    "RunStats",
    "SCRATCH_CAPACITY",
    "Stream",
    "Tag",
    "Trap",
    "TrapKind",
    "Vm",
    "VmProgram",
    "decode",
    "iter_instructions",
    "make_streams",
    "run_service",
    "scan_length",
    "typed_copy",
]
