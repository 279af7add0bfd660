"""Assembler, disassembler and the bundled service programs."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from ..streamvm.program import VmProgram
from .assembler import (
    AsmError,
    AsmSyntaxError,
    DuplicateLabel,
    OperandOutOfRange,
    UndefinedLabel,
    UnknownMnemonic,
    assemble,
    canonical_source,
)
from .disasm import BadBranchTarget, disassemble

BUNDLED_PROGRAMS = ("read_node.s", "write_node.s")


def bundled_source(name: str) -> str:
    return resources.files(__package__).joinpath("programs", name).read_text()


@lru_cache(maxsize=None)
def bundled_program() -> VmProgram:
    """Read and Write handlers merged into one code image."""
    program = None
    for name in BUNDLED_PROGRAMS:
        part = assemble(bundled_source(name), name)
        program = part if program is None else program.merged(part, "services")
    return program


__all__ = [
    "AsmError",
    "AsmSyntaxError",
    "BUNDLED_PROGRAMS",
    "BadBranchTarget",
    "DuplicateLabel",
    "OperandOutOfRange",
    "UndefinedLabel",
    "UnknownMnemonic",
    "assemble",
    "bundled_program",
    "bundled_source",
    "canonical_source",
    "disassemble",
]
