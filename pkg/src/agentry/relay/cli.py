"""``relay-store`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import signal
import sys
import threading

from agentry.relay.protocol import DEFAULT_PORT
from agentry.relay.server import RelayServer


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relay-store", description="Run the agentry relay store.")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--data-dir", default=".agentry-relay", help="persistence directory")
    p.add_argument("--no-persist", action="store_true", help="keep all state in memory")
    p.add_argument(
        "--inject-latency-ms",
        type=float,
        default=0.0,
        help="delay every request by this many milliseconds",
    )
    p.add_argument("--log-level", default="WARNING")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper())
    server = RelayServer(
        args.host,
        args.port,
        data_dir=None if args.no_persist else args.data_dir,
        inject_latency_ms=args.inject_latency_ms,
    )
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    server.start()
    host, port = server.address
    # The first stdout line announces the bound port; launchers wait for it.
    print(f"relay-store listening on {host}:{port}", flush=True)
    try:
        stop.wait()
    finally:
        server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
