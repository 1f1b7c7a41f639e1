"""Child-process entry point used by the subprocess launcher."""

from __future__ import annotations

import json
import logging
import os
import signal
import sys
from typing import Any

from agentry import tracing
from agentry.dataplane import DEFAULT_THRESHOLD
from agentry.exchange.dist import DistExchange
from agentry.ids import EntityId
from agentry.launch.registry import resolve_behavior
from agentry.launch.subprocess import (
    ENV_AGENT_ID,
    ENV_ARGS,
    ENV_BEHAVIOR,
    ENV_OPTIONS,
    ENV_STORE,
    ENV_TRACE,
    EXIT_CLEAN,
    EXIT_LOOP_FAILURE,
    EXIT_SETUP_FAILURE,
)
from agentry.runtime import Agent, AgentSetupError, CleanShutdown, LoopErrorPolicy


def main() -> int:
    logging.basicConfig(
        level=os.environ.get("AGENTRY_LOG_LEVEL", "WARNING"),
        format="%(asctime)s %(process)d %(name)s %(levelname)s %(message)s",
    )
    if os.environ.get(ENV_TRACE):
        tracing.enable_trace(os.environ[ENV_TRACE])
    log = logging.getLogger(__name__)
    try:
        agent_id = EntityId.parse(os.environ[ENV_AGENT_ID])
        cls = resolve_behavior(os.environ[ENV_BEHAVIOR])
        ctor: dict[str, Any] = json.loads(os.environ.get(ENV_ARGS) or "{}")
        opts: dict[str, Any] = json.loads(os.environ.get(ENV_OPTIONS) or "{}")
        behavior = cls(*ctor.get("args", ()), **ctor.get("kwargs", {}))
    except Exception as exc:
        # Restarting cannot fix a behavior that does not build.
        log.error("cannot build behavior: %s: %s", type(exc).__name__, exc)
        return EXIT_SETUP_FAILURE
    exchange = DistExchange(
        os.environ[ENV_STORE],
        direct_listen=opts.get("direct_listen", True),
        force_relay=opts.get("force_relay", False),
        host=opts.get("host", "127.0.0.1"),
        store_fallback=opts.get("store_fallback", False),
    )
    agent = Agent(
        behavior,
        exchange.connect(agent_id),
        loop_error_policy=LoopErrorPolicy(opts.get("loop_error_policy", "shutdown")),
        close_on_failure=False,
        threshold=opts.get("threshold", DEFAULT_THRESHOLD),
    )
    # SIGTERM is a graceful, non-terminal stop: the mailbox stays open.
    signal.signal(signal.SIGTERM, lambda *_: agent.self_shutdown())
    try:
        status = agent.run()
    except AgentSetupError as exc:
        log.error("setup failed: %s", exc)
        return EXIT_SETUP_FAILURE
    finally:
        exchange.shutdown()
    return EXIT_CLEAN if isinstance(status, CleanShutdown) else EXIT_LOOP_FAILURE


if __name__ == "__main__":
    sys.exit(main())
