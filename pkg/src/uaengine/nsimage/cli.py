"""uansc: compile and verify namespace images."""

from __future__ import annotations

import argparse
import sys

from .compiler import compile_model
from .image import verify
from .model import ModelError, load_model


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="uansc", description="Namespace image compiler")
    sub = parser.add_subparsers(dest="cmd", required=True)
    c = sub.add_parser("compile", help="compile a device model")
    c.add_argument("model")
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--report", action="store_true", help="print bytes per section")
    v = sub.add_parser("verify", help="check an image")
    v.add_argument("image")
    args = parser.parse_args(argv)

    if args.cmd == "compile":
        try:
            result = compile_model(load_model(args.model))
        except (ModelError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        with open(args.output, "wb") as fh:
            fh.write(result.image)
        if args.report:
            print(result.report())
        return 0

    try:
        with open(args.image, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    problems = verify(data)
    for p in problems:
        print(p, file=sys.stderr)
    if not problems:
        print("ok")
    return 1 if problems else 0


if __name__ == "__main__":
    sys.exit(main())
