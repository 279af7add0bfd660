"""uaasm: assemble and dump stream programs."""

from __future__ import annotations

import argparse
import sys

from ..streamvm.isa import IllegalOpcode
from ..streamvm.program import ProgramFormatError, VmProgram
from .assembler import AsmError, assemble
from .disasm import BadBranchTarget, disassemble


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="uaasm", description="Stream program assembler")
    sub = parser.add_subparsers(dest="cmd", required=True)
    b = sub.add_parser("build", help="assemble a source file into a UAVM image")
    b.add_argument("source")
    b.add_argument("-o", "--output", required=True)
    d = sub.add_parser("dump", help="disassemble a UAVM image")
    d.add_argument("image")
    args = parser.parse_args(argv)

    if args.cmd == "build":
        try:
            with open(args.source) as fh:
                program = assemble(fh.read(), args.source)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        except AsmError as exc:
            for err in exc.errors:
                print(f"{args.source}:{err}", file=sys.stderr)
            return 1
        with open(args.output, "wb") as fh:
            fh.write(program.to_bytes())
        return 0

    try:
        with open(args.image, "rb") as fh:
            program = VmProgram.from_bytes(fh.read(), args.image)
        sys.stdout.write(disassemble(program))
    except (OSError, ProgramFormatError, IllegalOpcode, BadBranchTarget) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
