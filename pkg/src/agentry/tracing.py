"""JSON-lines lifecycle trace for agents.

The runtime logs lifecycle events to the ``agentry.trace`` logger with the
event fields in ``extra``. Attach :class:`JsonLineFormatter` to a handler to
get one JSON object per line; :func:`parse_trace` reads them back.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path
from typing import Any, Iterable, Iterator

trace_logger = logging.getLogger("agentry.trace")

_RESERVED = set(vars(logging.LogRecord("", 0, "", 0, "", None, None))) | {"message", "asctime"}


def emit(event: str, agent: object, level: int = logging.INFO, **fields: Any) -> None:
    if trace_logger.isEnabledFor(level):
        trace_logger.log(level, event, extra={"event": event, "agent": str(agent), **fields})


class JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        out: dict[str, Any] = {"ts": record.created, "level": record.levelname}
        for key, value in vars(record).items():
            if key not in _RESERVED:
                out[key] = value if isinstance(value, (str, int, float, bool, type(None))) else str(value)
        out.setdefault("event", record.getMessage())
        return json.dumps(out, separators=(",", ":"))


def enable_trace(path: str | Path | None = None, level: int = logging.DEBUG) -> logging.Handler:
    """Send trace events to ``path`` (or stderr) as JSON lines."""
    handler: logging.Handler = logging.FileHandler(path) if path else logging.StreamHandler()
    handler.setFormatter(JsonLineFormatter())
    trace_logger.addHandler(handler)
    trace_logger.setLevel(level)
    # The trace has its own sink; keep it out of ordinary logs.
    trace_logger.propagate = False
    return handler


def parse_trace(lines: Iterable[str]) -> Iterator[dict[str, Any]]:
    for line in lines:
        line = line.strip()
        if line.startswith("{"):
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                continue


def now() -> float:
    return time.time()
