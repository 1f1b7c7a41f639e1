"""Exchange and relay-store setup shared by the scenarios."""

from __future__ import annotations

import contextlib
import subprocess
import sys
from dataclasses import dataclass
from typing import Any, Iterator

from agentry.bench.config import ExchangeMode
from agentry.exchange.base import Exchange
from agentry.exchange.dist import DistExchange
from agentry.exchange.local import LocalExchange
from agentry.relay.client import StoreClient
from agentry.relay.server import RelayServer

MESSAGE_OPS = ("PUT_MSG", "POLL_MSGS")
OBJECT_OPS = ("OBJ_PUT", "OBJ_GET")


class RelayStoreProcess:
    """A relay store running as a child process on an ephemeral port."""

    def __init__(self, inject_latency_ms: float = 0.0, host: str = "127.0.0.1") -> None:
        self.proc = subprocess.Popen(
            [
                sys.executable,
                "-m",
                "agentry.relay",
                "--host",
                host,
                "--port",
                "0",
                "--no-persist",
                "--inject-latency-ms",
                str(inject_latency_ms),
            ],
            stdout=subprocess.PIPE,
            text=True,
        )
        assert self.proc.stdout is not None
        line = self.proc.stdout.readline()
        if "listening on" not in line:
            self.proc.kill()
            raise RuntimeError(f"relay store failed to start: {line!r}")
        self.endpoint = line.rsplit(" ", 1)[1].strip()

    def stop(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        if self.proc.stdout is not None:
            self.proc.stdout.close()

    def __enter__(self) -> RelayStoreProcess:
        return self

    def __exit__(self, *exc: object) -> None:
        self.stop()


@dataclass
class BenchEnv:
    mode: ExchangeMode
    exchange: Exchange
    store_endpoint: str | None = None

    def store_stats(self) -> dict[str, Any]:
        if self.store_endpoint is None:
            return {"ops": {}, "bytes_in": {}, "bytes_out": {}}
        client = StoreClient.from_endpoint(self.store_endpoint)
        try:
            return client.stats()
        finally:
            client.close()

    def message_bytes(self) -> int:
        """Envelope bytes carried through the relay so far."""
        s = self.store_stats()
        return s["bytes_in"].get("PUT_MSG", 0) + s["bytes_out"].get("POLL_MSGS", 0)

    def object_bytes(self) -> int:
        s = self.store_stats()
        return s["bytes_in"].get("OBJ_PUT", 0) + s["bytes_out"].get("OBJ_GET", 0)


@contextlib.contextmanager
def bench_env(
    mode: ExchangeMode | str,
    *,
    inject_latency_ms: float = 0.0,
    store_process: bool = False,
    store_fallback: bool = False,
) -> Iterator[BenchEnv]:
    """Yield an exchange for ``mode``; dist modes get a fresh relay store."""
    mode = ExchangeMode(mode)
    if mode is ExchangeMode.LOCAL:
        yield BenchEnv(mode, LocalExchange())
        return
    with contextlib.ExitStack() as stack:
        if store_process:
            endpoint = stack.enter_context(RelayStoreProcess(inject_latency_ms)).endpoint
        else:
            server = stack.enter_context(RelayServer(inject_latency_ms=inject_latency_ms))
            endpoint = "%s:%d" % server.address
        exchange = DistExchange(
            endpoint, force_relay=mode is ExchangeMode.DIST_RELAY, store_fallback=store_fallback
        )
        stack.callback(exchange.shutdown)
        yield BenchEnv(mode, exchange, endpoint)
