"""Behaviors used by the benchmarks and the integration tests.

They live in the package so subprocess workers can import them by name.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from typing import Any

from agentry.behavior import Behavior, action, loop
from agentry.dataplane import Proxy
from agentry.handle import Handle
from agentry.launch.registry import register_behavior
from agentry.launch.state import StateStore


@register_behavior
class Example(Behavior):
    @action
    def square(self, x: int) -> int:
        return x * x


@register_behavior
class NoOp(Behavior):
    """Accepts anything and does nothing with it."""

    max_action_concurrency = 8

    @action
    def noop(self, *args: Any) -> None:
        return None

    @action
    def echo(self, data: Any) -> Any:
        return data

    @action
    def size(self, data: Any) -> int:
        return len(data)


@register_behavior
class Sleeper(Behavior):
    """Sleeps on request, one action at a time."""

    max_action_concurrency = 1

    @action
    def sleep(self, seconds: float) -> float:
        time.sleep(seconds)
        return seconds


@register_behavior
class ChainLink(Behavior):
    """Passes its argument to the next link; the last link reads it."""

    max_action_concurrency = 4

    @action
    def forward(self, data: Any, rest: list[Handle]) -> str:
        if rest:
            return rest[0].forward(data, rest[1:]).result()
        if isinstance(data, Proxy):
            data = data.resolve()
        return hashlib.sha256(bytes(data)).hexdigest()


@register_behavior
class Talker(Behavior):
    """One side of a back-and-forth conversation.

    ``converse`` sends ``rounds`` messages to the peer, each answered with a
    message of the same size, so a run moves ``2 * rounds`` messages.
    """

    max_action_concurrency = 2

    @action
    def converse(self, peer: Handle, message: bytes, rounds: int) -> int:
        if rounds < 1:
            raise ValueError("rounds must be at least 1")
        exchanged = 0
        for _ in range(rounds):
            reply = peer.answer(message).result()
            if len(reply) != len(message):
                raise RuntimeError("reply size mismatch")
            exchanged += 2
        return exchanged

    @action
    def answer(self, message: bytes) -> bytes:
        return bytes(message)


@register_behavior
class Counter(Behavior):
    """Counter that checkpoints every increment to a :class:`StateStore`.

    The count is restored in ``on_setup``, so a restarted agent continues
    from the last checkpoint.
    """

    def __init__(self, state_root: str) -> None:
        self.state_root = state_root
        self.count = 0
        self.state: StateStore | None = None

    def on_setup(self) -> None:
        self.state = StateStore(self.state_root, self.agent_id)
        if "count" in self.state:
            self.count = int(self.state["count"])

    @action
    def increment(self) -> int:
        self.count += 1
        assert self.state is not None
        self.state["count"] = str(self.count).encode()
        return self.count

    @action
    def value(self) -> int:
        return self.count

    @action
    def pid(self) -> int:
        return os.getpid()


@register_behavior
class Failing(Behavior):
    """Plain loop that raises after a delay."""

    def __init__(self, delay: float = 0.05) -> None:
        self.delay = delay

    @loop
    def crash(self, shutdown: threading.Event) -> None:
        if not shutdown.wait(self.delay):
            raise RuntimeError("loop crashed")

    @action
    def noop(self) -> None:
        return None


def item_bytes(item_id: int, size: int) -> bytes:
    """Deterministic synthetic item content."""
    seed = hashlib.sha256(item_id.to_bytes(8, "big")).digest()
    return (seed * (size // len(seed) + 1))[:size]


@register_behavior
class Generator(Behavior):
    """First pipeline stage: emits items and retries ones that fail downstream."""

    max_action_concurrency = 2

    @action
    def generate(
        self,
        count: int,
        size: int,
        downstream: list[Handle],
        window: int = 4,
        timeout: float = 6.0,
        attempts: int = 5,
    ) -> dict[str, int]:
        from concurrent.futures import FIRST_COMPLETED, wait

        pending: dict[Any, tuple[int, int]] = {}
        next_item = done = retries = 0

        def submit(item: int, attempt: int) -> None:
            fut = downstream[0].process(item, item_bytes(item, size), downstream[1:], _timeout=timeout)
            pending[fut] = (item, attempt)

        while done < count:
            while next_item < count and len(pending) < window:
                submit(next_item, 1)
                next_item += 1
            finished, _ = wait(list(pending), return_when=FIRST_COMPLETED)
            for fut in finished:
                item, attempt = pending.pop(fut)
                if fut.exception() is None:
                    done += 1
                elif attempt < attempts:
                    retries += 1
                    submit(item, attempt + 1)
                else:
                    raise RuntimeError(f"item {item} failed {attempt} times") from fut.exception()
        return {"items": done, "retries": retries}


@register_behavior
class Assembler(Behavior):
    """Prefixes each item with a header naming the item."""

    max_action_concurrency = 8

    def __init__(self, hop_timeout: float = 4.0) -> None:
        self.hop_timeout = hop_timeout

    @action
    def process(self, item: int, data: Any, rest: list[Handle]) -> str:
        raw = data.resolve() if isinstance(data, Proxy) else bytes(data)
        assembled = item.to_bytes(8, "big") + raw
        return rest[0].process(item, assembled, rest[1:], _timeout=self.hop_timeout).result()


@register_behavior
class Validator(Behavior):
    """Rejects items whose body does not match their header."""

    max_action_concurrency = 8

    def __init__(self, hop_timeout: float = 4.0) -> None:
        self.hop_timeout = hop_timeout

    @action
    def process(self, item: int, data: Any, rest: list[Handle]) -> str:
        raw = data.resolve() if isinstance(data, Proxy) else bytes(data)
        if int.from_bytes(raw[:8], "big") != item or raw[8:] != item_bytes(item, len(raw) - 8):
            raise ValueError(f"item {item} is corrupt")
        digest = hashlib.sha256(raw).hexdigest()
        return rest[0].process(item, digest, rest[1:], _timeout=self.hop_timeout).result()


@register_behavior
class Recorder(Behavior):
    """Sink: records each item once, however often it is delivered."""

    max_action_concurrency = 4

    def __init__(self) -> None:
        self.recorded: dict[int, str] = {}
        self.deliveries = 0

    @action
    def process(self, item: int, digest: str, rest: list[Handle]) -> str:
        self.deliveries += 1
        self.recorded.setdefault(item, digest)
        return digest

    @action
    def summary(self) -> dict[str, Any]:
        return {
            "recorded": sorted(self.recorded),
            "deliveries": self.deliveries,
            "duplicates": self.deliveries - len(self.recorded),
        }

    @action
    def count(self) -> int:
        return len(self.recorded)
