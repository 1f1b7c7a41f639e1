"""Benchmark records, CSV output and summary statistics."""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Iterable, Sequence

FIELDS = ("scenario", "parameters", "metric", "value", "unit", "timestamp")


@dataclass(frozen=True)
class BenchRecord:
    scenario: str
    parameters: dict[str, Any]
    metric: str
    value: float
    unit: str
    timestamp: float = field(default_factory=time.time)

    def row(self) -> dict[str, str]:
        return {
            "scenario": self.scenario,
            "parameters": json.dumps(self.parameters, sort_keys=True, separators=(",", ":")),
            "metric": self.metric,
            "value": repr(float(self.value)),
            "unit": self.unit,
            "timestamp": f"{self.timestamp:.6f}",
        }

    @classmethod
    def from_row(cls, row: dict[str, str]) -> BenchRecord:
        return cls(
            row["scenario"],
            json.loads(row["parameters"]),
            row["metric"],
            float(row["value"]),
            row["unit"],
            float(row["timestamp"]),
        )


def write_csv(records: Iterable[BenchRecord], out: str | Path | IO[str], *, append: bool = False) -> None:
    if isinstance(out, (str, Path)):
        path = Path(out)
        header = not (append and path.exists() and path.stat().st_size > 0)
        with path.open("a" if append else "w", newline="") as fh:
            _write(records, fh, header)
    else:
        _write(records, out, True)


def _write(records: Iterable[BenchRecord], fh: IO[str], header: bool) -> None:
    writer = csv.DictWriter(fh, fieldnames=FIELDS)
    if header:
        writer.writeheader()
    for record in records:
        writer.writerow(record.row())


def read_csv(path: str | Path) -> list[BenchRecord]:
    with Path(path).open(newline="") as fh:
        return [BenchRecord.from_row(row) for row in csv.DictReader(fh)]


def median(values: Sequence[float]) -> float:
    return statistics.median(values)


def mad(values: Sequence[float]) -> float:
    """Median absolute deviation (unscaled)."""
    m = statistics.median(values)
    return statistics.median(abs(v - m) for v in values)


def summarize(
    scenario: str, parameters: dict[str, Any], metric: str, values: Sequence[float], unit: str
) -> list[BenchRecord]:
    """Median and MAD records for a sample."""
    if not values:
        raise ValueError(f"no samples for {metric}")
    return [
        BenchRecord(scenario, parameters, f"{metric}_median", median(values), unit),
        BenchRecord(scenario, parameters, f"{metric}_mad", mad(values), unit),
        BenchRecord(scenario, parameters, f"{metric}_n", float(len(values)), "count"),
    ]
