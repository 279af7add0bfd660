"""uaserver: run the live server, record captures, replay them.

Exit codes: 0 success, 1 configuration error, 2 runtime failure. ``replay``
returns 1 when responses diverge and 2 when the capture cannot be read.
"""

from __future__ import annotations

import argparse
import asyncio
import contextlib
import logging
import signal
import sys

from ..engine.capture import CaptureMalformed
from .app import StartupError, UaServer
from .config import ConfigError, ServerConfig, load_config
from .replay import replay

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _setup_logging(level: int) -> None:
    logging.basicConfig(level=level, stream=sys.stderr, format="ts=%(asctime)s level=%(levelname)s logger=%(name)s %(message)s")


async def _serve(cfg: ServerConfig, record_dir: str | None) -> None:
    server = UaServer(cfg, record_dir)
    await server.start()
    loop = asyncio.get_running_loop()
    stop = asyncio.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        with contextlib.suppress(NotImplementedError):
            loop.add_signal_handler(sig, stop.set)
    task = asyncio.create_task(server.serve_forever())
    await stop.wait()
    task.cancel()
    await server.stop()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="uaserver", description="Live opc.tcp server for the engine")
    sub = parser.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="serve until interrupted")
    r.add_argument("-c", "--config", help="key = value config file (defaults if omitted)")
    rec = sub.add_parser("record", help="serve and record every frame as a capture")
    rec.add_argument("-c", "--config")
    rec.add_argument("-o", "--output", required=True)
    rp = sub.add_parser("replay", help="replay a capture through a fresh engine and compare")
    rp.add_argument("capture")
    rp.add_argument("--engine-freq", type=int, default=50)
    args = parser.parse_args(argv)

    if args.cmd == "replay":
        _setup_logging(logging.WARNING)
        from ..engine.clocks import ClockConfig

        try:
            report = replay(args.capture, clocks=ClockConfig(args.engine_freq))
        except CaptureMalformed as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(report.render())
        return EXIT_OK if report.passed else 1

    try:
        cfg = load_config(args.config) if args.config else ServerConfig()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _setup_logging(cfg.logging_level)
    try:
        asyncio.run(_serve(cfg, args.output if args.cmd == "record" else None))
    except StartupError as exc:
        logging.getLogger("uaengine.server").error("event=startup_failed detail=%r", str(exc))
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        pass
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
