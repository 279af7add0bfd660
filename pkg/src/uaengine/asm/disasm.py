"""Disassembler: program code back to a canonical listing."""

from __future__ import annotations

from ..streamvm.isa import IllegalOpcode, Op, iter_instructions
from ..streamvm.program import VmProgram
from .assembler import render_listing


class BadBranchTarget(Exception):
    def __init__(self, offset: int, target: int):
        super().__init__(f"branch at {offset} targets {target}, not an instruction boundary")
        self.offset, self.target = offset, target


def disassemble(program: VmProgram) -> str:
    """Listing with synthesized labels; raises IllegalOpcode with the byte offset."""
    code = program.code
    items = []
    boundaries = set()
    for addr, ins in iter_instructions(code):
        boundaries.add(addr)
        target = addr + ins.length + ins.imm if ins.op in (Op.BR, Op.CALL, Op.BRC) else None
        items.append((addr, ins, target))
    boundaries.add(len(code))
    for addr, _, target in items:
        if target is not None and target not in boundaries:
            raise BadBranchTarget(addr, target)
    for service, addr in program.entry_points.items():
        if addr not in boundaries or addr == len(code):
            raise IllegalOpcode(addr, f"entry point for service {service} is not an instruction")
    return render_listing(items, len(code), program.entry_points)
