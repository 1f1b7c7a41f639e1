"""Microbenchmarks for the agent middleware."""

from agentry.bench.config import BenchConfig, ExchangeMode
from agentry.bench.records import BenchRecord, read_csv, write_csv
from agentry.bench.scenarios import SCENARIOS, Check, ScenarioResult

__all__ = [
    "SCENARIOS",
    "BenchConfig",
    "BenchRecord",
    "Check",
    "ExchangeMode",
    "ScenarioResult",
    "read_csv",
    "write_csv",
]
