"""Benchmark configuration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class ExchangeMode(str, enum.Enum):
    LOCAL = "local"
    DIST_DIRECT = "dist-direct"
    DIST_RELAY = "dist-relay"


@dataclass
class BenchConfig:
    scenario: str
    agents: int = 1
    payload_sizes: list[int] = field(default_factory=lambda: [10_000])
    repetitions: int = 5
    mode: ExchangeMode = ExchangeMode.LOCAL
    inject_latency_ms: float = 0.0
    output: str | None = None

    def __post_init__(self) -> None:
        self.mode = ExchangeMode(self.mode)
        if self.repetitions < 3:
            raise ValueError("repetitions must be at least 3")
        if list(self.payload_sizes) != sorted(self.payload_sizes):
            raise ValueError("payload sizes must be sorted ascending")
        if any(s < 0 for s in self.payload_sizes):
            raise ValueError("payload sizes must be non-negative")
        if self.agents < 0:
            raise ValueError("agent count must be non-negative")
        if self.inject_latency_ms < 0:
            raise ValueError("injected latency must be non-negative")
