"""Runs each agent in its own Python process and restarts it when it dies."""

from __future__ import annotations

import json
import logging
import os
import signal
import subprocess
import sys
import threading
import time
from typing import Any, Callable

from agentry.dataplane import DEFAULT_THRESHOLD
from agentry.errors import AgentryError
from agentry.exchange.base import Exchange
from agentry.exchange.dist import DistExchange
from agentry.ids import EntityId
from agentry.launch.launcher import (
    AgentStatus,
    BehaviorSource,
    Launcher,
    RestartPolicy,
    RunningAgent,
)
from agentry.launch.registry import behavior_path
from agentry.runtime import LoopErrorPolicy

logger = logging.getLogger(__name__)

ENV_STORE = "AGENTRY_STORE_ENDPOINT"
ENV_AGENT_ID = "AGENTRY_AGENT_ID"
ENV_BEHAVIOR = "AGENTRY_BEHAVIOR"
ENV_ARGS = "AGENTRY_BEHAVIOR_ARGS"
ENV_OPTIONS = "AGENTRY_OPTIONS"
ENV_TRACE = "AGENTRY_TRACE"

EXIT_CLEAN = 0
EXIT_LOOP_FAILURE = 1
EXIT_SETUP_FAILURE = 3


class SubprocessAgent(RunningAgent):
    def __init__(self, agent_id: EntityId, behavior_name: str) -> None:
        super().__init__(agent_id, behavior_name)
        self.process: subprocess.Popen[bytes] | None = None
        self.exit_codes: list[int] = []
        self.started_at: list[float] = []
        self.exited_at: list[float] = []
        self._stopping = False
        self._lock = threading.Lock()
        self.on_failed: Callable[[SubprocessAgent], None] | None = None

    @property
    def pid(self) -> int | None:
        return self.process.pid if self.process else None

    def kill(self) -> None:
        """Simulate a crash: SIGKILL the current child."""
        with self._lock:
            proc = self.process
        if proc is not None and proc.poll() is None:
            proc.kill()

    def terminate(self) -> None:
        """Ask the child to stop gracefully; it will not be restarted."""
        with self._lock:
            self._stopping = True
            proc = self.process
        if proc is not None and proc.poll() is None:
            proc.send_signal(signal.SIGTERM)


class SubprocessLauncher(Launcher):
    """Launches agents as child processes over a :class:`DistExchange`.

    The child rebuilds the behavior from its registry name and JSON
    constructor arguments. A watcher thread per child relaunches the same
    agent id after a nonzero exit; exit code 0 means a requested shutdown.
    """

    def __init__(
        self,
        restart_policy: RestartPolicy = RestartPolicy(),
        *,
        python: str = sys.executable,
        loop_error_policy: LoopErrorPolicy = LoopErrorPolicy.SHUTDOWN_ON_ERROR,
        threshold: int | None = DEFAULT_THRESHOLD,
        trace_path: str | None = None,
        env: dict[str, str] | None = None,
        stop_timeout: float = 10.0,
    ) -> None:
        self.restart_policy = restart_policy
        self.python = python
        self.loop_error_policy = loop_error_policy
        self.threshold = threshold
        self.trace_path = trace_path
        self.extra_env = dict(env or {})
        self.stop_timeout = stop_timeout
        self._agents: list[SubprocessAgent] = []
        self._closed = threading.Event()

    def _environment(self, source: BehaviorSource, exchange: DistExchange, agent_id: EntityId) -> dict[str, str]:
        if not isinstance(source.behavior, type):
            raise TypeError("the subprocess launcher needs a behavior class, not an instance")
        options: dict[str, Any] = {
            "direct_listen": exchange.direct_listen,
            "force_relay": exchange.force_relay,
            "host": exchange.host,
            "store_fallback": exchange.store_fallback,
            "loop_error_policy": self.loop_error_policy.value,
            "threshold": self.threshold,
        }
        env = dict(os.environ)
        env.update(self.extra_env)
        # Let the child import whatever the parent could.
        paths = [p for p in sys.path if p] + env.get("PYTHONPATH", "").split(os.pathsep)
        env["PYTHONPATH"] = os.pathsep.join(dict.fromkeys(p for p in paths if p))
        env[ENV_STORE] = exchange.store_endpoint
        env[ENV_AGENT_ID] = str(agent_id)
        env[ENV_BEHAVIOR] = behavior_path(source.cls)
        env[ENV_ARGS] = json.dumps({"args": list(source.args), "kwargs": source.kwargs})
        env[ENV_OPTIONS] = json.dumps(options)
        if self.trace_path is not None:
            env[ENV_TRACE] = self.trace_path
        return env

    def launch(self, source: BehaviorSource, exchange: Exchange, agent_id: EntityId) -> SubprocessAgent:
        if not isinstance(exchange, DistExchange):
            raise TypeError("the subprocess launcher requires a DistExchange")
        env = self._environment(source, exchange, agent_id)
        record = SubprocessAgent(agent_id, env[ENV_BEHAVIOR])
        self._spawn(record, env)
        record.status = AgentStatus.RUNNING
        watcher = threading.Thread(
            target=self._watch, args=(record, env, exchange), name=f"supervise-{agent_id}", daemon=True
        )
        watcher.start()
        self._agents.append(record)
        return record

    def _spawn(self, record: SubprocessAgent, env: dict[str, str]) -> None:
        proc = subprocess.Popen([self.python, "-m", "agentry.launch.worker"], env=env)
        with record._lock:
            record.process = proc
            record.started_at.append(time.monotonic())
        logger.info("started %s as pid %d", record.agent_id, proc.pid)

    def _watch(self, record: SubprocessAgent, env: dict[str, str], exchange: DistExchange) -> None:
        while True:
            assert record.process is not None
            code = record.process.wait()
            record.exited_at.append(time.monotonic())
            record.exit_codes.append(code)
            if code == EXIT_CLEAN or record._stopping:
                logger.info("%s exited with %d", record.agent_id, code)
                record._finish(AgentStatus.STOPPED)
                return
            if code == EXIT_SETUP_FAILURE or record.restarts >= self.restart_policy.max_restarts:
                logger.error("%s exited with %d; giving up", record.agent_id, code)
                self._fail(record, exchange)
                return
            record.restarts += 1
            record.status = AgentStatus.RESTARTING
            delay = self.restart_policy.delay(record.restarts)
            logger.warning(
                "%s exited with %d; restart %d in %.2fs", record.agent_id, code, record.restarts, delay
            )
            if self._closed.wait(delay) or record._stopping:
                record._finish(AgentStatus.STOPPED)
                return
            self._spawn(record, env)
            record.status = AgentStatus.RUNNING

    def _fail(self, record: SubprocessAgent, exchange: DistExchange) -> None:
        try:
            exchange.close(record.agent_id)
        except AgentryError as exc:
            logger.warning("closing mailbox of %s failed: %s", record.agent_id, exc)
        record._finish(AgentStatus.FAILED)
        if record.on_failed is not None:
            record.on_failed(record)

    def close(self) -> None:
        self._closed.set()
        for record in self._agents:
            record.terminate()
        deadline = time.monotonic() + self.stop_timeout
        for record in self._agents:
            if not record.wait(max(0.0, deadline - time.monotonic())):
                record.kill()
                record.wait(2.0)
