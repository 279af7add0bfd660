import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uaengine.asm import (
    BUNDLED_PROGRAMS,
    AsmError,
    DuplicateLabel,
    OperandOutOfRange,
    UndefinedLabel,
    UnknownMnemonic,
    assemble,
    bundled_program,
    bundled_source,
    canonical_source,
    disassemble,
)
from uaengine.asm.cli import main as uaasm
from uaengine.asm.disasm import BadBranchTarget
from uaengine.streamvm import IllegalOpcode, Instruction, Op, Tag, VmProgram, iter_instructions
from uaengine.streamvm.isa import LDI_RANGES


def test_halt_is_one_byte():
    p = assemble("HALT")
    assert p.code == b"\x00"


def test_halt_listing():
    assert disassemble(VmProgram("h", b"\x00", {})).strip() == "HALT"


def test_unassigned_opcode_reports_offset_zero():
    with pytest.raises(IllegalOpcode) as exc:
        disassemble(VmProgram("bad", b"\xff", {}))
    assert exc.value.offset == 0


def test_illegal_opcode_offset_inside_program():
    with pytest.raises(IllegalOpcode) as exc:
        disassemble(VmProgram("bad", b"\x00\x01\x60", {}))
    assert exc.value.offset == 2


def test_undefined_label_carries_line():
    src = "start:\n    HALT\n    BR nowhere\n"
    with pytest.raises(UndefinedLabel) as exc:
        assemble(src)
    assert exc.value.line == 3


def test_duplicate_label():
    with pytest.raises(DuplicateLabel) as exc:
        assemble("a:\nHALT\na:\nRET\n")
    assert exc.value.line == 3


@pytest.mark.parametrize(
    "line",
    ["COPY.i32 s16, s1", "SEEK s0, x8", "LDI.u8 s3, 256", "LDI.i8 s3, -129", "TRAP 300", "BRC EOS, s16, x"],
)
def test_operand_out_of_range(line):
    with pytest.raises(OperandOutOfRange) as exc:
        assemble(f"x:\n{line}\n")
    assert exc.value.line == 2


def test_branch_offset_beyond_range():
    src = "BR far\n" + "LDI.u32 s3, 0\n" * 5462 + "far:\nHALT\n"
    with pytest.raises(OperandOutOfRange):
        assemble(src)
    assemble("BR far\n" + "LDI.u32 s3, 0\n" * 5461 + "far:\nHALT\n")  # 32766 bytes away


@pytest.mark.parametrize("line", ["MOVE s0, s1", "COPY s0, s1", "COPY.i64 s0, s1", "LDI.str s1, 0", "HALT.i32"])
def test_unknown_mnemonic(line):
    with pytest.raises(UnknownMnemonic):
        assemble(line)


def test_all_errors_are_collected():
    src = "HALT\nFOO\nBR missing\nCOPY.i32 s0, s99\n"
    with pytest.raises(AsmError) as exc:
        assemble(src)
    assert [e.line for e in exc.value.errors] == [2, 3, 4]


def test_entry_must_name_a_label():
    with pytest.raises(UndefinedLabel):
        assemble(".entry 631 missing\nHALT\n")


def test_ldi_immediates_encode_little_endian():
    p = assemble("LDI.u32 s1, 0x027A0001\nLDI.i32 s1, -1\nLDI.f32 s1, 0x3FC00000\n")
    assert p.code == bytes([0x56, 0x10, 0x01, 0x00, 0x7A, 0x02, 0x55, 0x10]) + b"\xff" * 4 + bytes([0x57, 0x10]) + struct.pack("<f", 1.5)


def test_branch_offsets_are_relative_to_next_instruction():
    p = assemble("top:\nBRC EOS, s0, end\nBR top\nend:\nHALT\n")
    assert p.code == bytes([0x04, 0x60, 0x03, 0x00, 0x02, 0xF9, 0xFF, 0x00])


def test_comments_case_and_spacing_are_ignored():
    a = assemble("  copy.I32   s0 ,s1 ; move\n\thalt")
    b = assemble("COPY.i32 s0, s1\nHALT")
    assert a.code == b.code


# --- bundled programs -----------------------------------------------------------


@pytest.mark.parametrize("name", BUNDLED_PROGRAMS)
def test_bundled_program_roundtrip(name):
    src = bundled_source(name)
    program = assemble(src, name)
    listing = disassemble(program)
    assert listing == canonical_source(src)
    again = assemble(listing)
    assert again.code == program.code
    assert again.entry_points == program.entry_points


def test_bundled_services():
    p = bundled_program()
    assert set(p.entry_points) == {631, 673}
    # every instruction decodes and every branch lands on a boundary
    disassemble(p)


def test_position_independence():
    src = bundled_source("read_node.s")
    shifted = src.replace("read:\n", "    BR read\nread:\n", 1)
    a, b = assemble(src), assemble(shifted)
    assert b.code[:3] == bytes([Op.BR, 0, 0])
    assert b.code[3:] == a.code
    assert b.entry_points == {k: v + 3 for k, v in a.entry_points.items()}


# --- random programs ---------------------------------------------------------------

_STREAM = st.integers(0, 15)


@st.composite
def plain_instruction(draw):
    op = draw(st.sampled_from([Op.HALT, Op.RET, Op.TRAP, Op.MKIDX, Op.SEEK, Op.COPY, Op.SKIP, Op.CMP, Op.EMIT, Op.LDI]))
    if op in (Op.HALT, Op.RET):
        return Instruction(op, length=1)
    if op is Op.TRAP:
        return Instruction(op, a=draw(st.integers(0, 255)), length=2)
    if op in (Op.MKIDX, Op.SEEK):
        return Instruction(op, a=draw(_STREAM), b=draw(st.integers(0, 7)), length=2)
    if op is Op.LDI:
        tag = draw(st.sampled_from(sorted(LDI_RANGES)))
        return Instruction(op, tag, draw(_STREAM), imm=draw(st.integers(*LDI_RANGES[tag])), length=6)
    tag = draw(st.sampled_from(list(Tag)))
    if op in (Op.COPY, Op.CMP):
        return Instruction(op, tag, draw(_STREAM), draw(_STREAM), length=2)
    return Instruction(op, tag, draw(_STREAM), length=2)


@st.composite
def valid_programs(draw):
    """Programs whose branches and entry points land on instruction boundaries."""
    n = draw(st.integers(1, 40))
    slots = []
    for _ in range(n):
        kind = draw(st.sampled_from(["plain", "plain", "BR", "CALL", "BRC"]))
        slots.append(draw(plain_instruction()) if kind == "plain" else (kind, draw(st.integers(0, n)), draw(st.integers(0, 7)), draw(_STREAM)))
    lengths = [s.length if isinstance(s, Instruction) else (4 if s[0] == "BRC" else 3) for s in slots]
    addr = [0]
    for length in lengths:
        addr.append(addr[-1] + length)
    code = bytearray()
    for i, s in enumerate(slots):
        if isinstance(s, Instruction):
            code += s.encode()
            continue
        kind, target, cond, stream = s
        off = addr[target] - addr[i + 1]
        if kind == "BRC":
            code += Instruction(Op.BRC, a=cond, b=stream if cond >= 6 else 0, imm=off, length=4).encode()
        else:
            code += Instruction(Op[kind], imm=off, length=3).encode()
    services = draw(st.lists(st.integers(0, 0xFFFFFFFF), max_size=3, unique=True))
    entries = {svc: addr[draw(st.integers(0, n - 1))] for svc in services}
    return VmProgram("rand", bytes(code), entries)


@settings(max_examples=300)
@given(valid_programs())
def test_assemble_disassemble_identity(program):
    listing = disassemble(program)
    again = assemble(listing)
    assert again.code == program.code
    assert again.entry_points == program.entry_points
    assert canonical_source(listing) == listing


@given(valid_programs())
def test_instruction_boundaries_cover_code(program):
    ends = [addr + ins.length for addr, ins in iter_instructions(program.code)]
    assert ends[-1] == len(program.code)


def test_branch_into_instruction_middle_is_rejected():
    code = bytes([Op.BR, 0x01, 0x00, Op.COPY | Tag.i32, 0x01])  # lands on operand byte
    with pytest.raises(BadBranchTarget):
        disassemble(VmProgram("x", code, {}))


# --- CLI ---------------------------------------------------------------------------------


def test_cli_build_and_dump(tmp_path, capsys):
    src = tmp_path / "p.s"
    src.write_text(bundled_source("write_node.s"))
    out = tmp_path / "p.uavm"
    assert uaasm(["build", str(src), "-o", str(out)]) == 0
    assert out.read_bytes() == assemble(src.read_text()).to_bytes()
    assert uaasm(["dump", str(out)]) == 0
    assert capsys.readouterr().out == canonical_source(src.read_text())


def test_cli_reports_errors_one_per_line(tmp_path, capsys):
    src = tmp_path / "bad.s"
    src.write_text("HALT\nBR nowhere\nFROB\n")
    assert uaasm(["build", str(src), "-o", str(tmp_path / "x")]) == 1
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 2
    assert "line 2" in lines[0] and "UndefinedLabel" in lines[0]
    assert "line 3" in lines[1] and "UnknownMnemonic" in lines[1]


def test_cli_dump_rejects_garbage(tmp_path):
    bad = tmp_path / "x.uavm"
    bad.write_bytes(b"UAVM\x01\x00\x00\x00\x01\x00\x00\x00\xff")
    assert uaasm(["dump", str(bad)]) == 1
