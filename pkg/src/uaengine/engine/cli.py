"""uasim: run captures through the cycle simulator."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..s3 import EngineConfig
from .capture import CaptureMalformed, read_capture
from .clocks import ENGINE_FREQUENCIES, ClockConfig
from .report import write_report
from .sim import run_trace


def _window(text: str) -> tuple[int, int]:
    a, _, b = text.partition(":")
    return int(a), int(b)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="uasim", description="Cycle simulator for the engine")
    sub = parser.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="simulate one capture and print the summary")
    r.add_argument("capture")
    r.add_argument("--engine-freq", type=int, default=50, choices=ENGINE_FREQUENCIES)
    r.add_argument("--trace", help="write the dense trace export here")
    r.add_argument("--window", type=_window, help="cycle range a:b for the dense export")
    r.add_argument("--responses", help="directory to write the response frames into")
    rep = sub.add_parser("report", help="latency table and figures across engine frequencies")
    rep.add_argument("capture")
    rep.add_argument("-o", "--output", required=True)
    args = parser.parse_args(argv)

    try:
        cap = read_capture(args.capture)
    except CaptureMalformed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    cfg = EngineConfig()
    if cap.meta.get("endpoint_url"):
        cfg = EngineConfig(endpoint_url=cap.meta["endpoint_url"])

    if args.cmd == "report":
        files = write_report(cfg, cap, args.output)
        sys.stdout.write(files["table"].read_text())
        for kind, path in files.items():
            print(f"# {kind}: {path}")
        return 0

    result = run_trace(cfg, ClockConfig(args.engine_freq), cap)
    trace = result.trace
    if args.trace:
        with open(args.trace, "w") as fh:
            trace.export(fh, args.window)
    if args.responses:
        out = Path(args.responses)
        out.mkdir(parents=True, exist_ok=True)
        for conn, frames in result.responses.items():
            for i, f in enumerate(frames):
                (out / f"{conn}-{i:05d}.bin").write_bytes(f)
    trace.write_summary(sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
