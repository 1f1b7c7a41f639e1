"""Launchers start agents; the thread launcher runs them in this process."""

from __future__ import annotations

import abc
import enum
import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Sequence

from agentry.behavior import Behavior
from agentry.dataplane import DEFAULT_THRESHOLD
from agentry.exchange.base import Exchange
from agentry.ids import EntityId
from agentry.runtime import Agent, AgentSetupError, LoopErrorPolicy, RunStatus

logger = logging.getLogger(__name__)


class AgentStatus(enum.Enum):
    STARTING = "starting"
    RUNNING = "running"
    RESTARTING = "restarting"
    STOPPED = "stopped"
    FAILED = "failed"


@dataclass(frozen=True)
class RestartPolicy:
    """Restart on unexpected exit, backing off exponentially up to ``backoff_cap``."""

    max_restarts: int = 0
    backoff: float = 0.25
    backoff_cap: float = 10.0

    def delay(self, attempt: int) -> float:
        return min(self.backoff * (2 ** max(attempt - 1, 0)), self.backoff_cap)


@dataclass
class BehaviorSource:
    """A behavior to build: an instance, or a class plus constructor args."""

    behavior: Behavior | type[Behavior]
    args: Sequence[Any] = ()
    kwargs: dict[str, Any] = field(default_factory=dict)

    @property
    def cls(self) -> type[Behavior]:
        b = self.behavior
        return b if isinstance(b, type) else type(b)

    def build(self) -> Behavior:
        b = self.behavior
        if isinstance(b, type):
            return b(*self.args, **self.kwargs)
        return b


class RunningAgent:
    """Launcher-side record of one agent."""

    def __init__(self, agent_id: EntityId, behavior_name: str) -> None:
        self.agent_id = agent_id
        self.behavior_name = behavior_name
        self.status = AgentStatus.STARTING
        self.result: RunStatus | None = None
        self.error: BaseException | None = None
        self.restarts = 0
        self._done = threading.Event()

    def _finish(self, status: AgentStatus) -> None:
        self.status = status
        self._done.set()

    def wait(self, timeout: float | None = None) -> bool:
        return self._done.wait(timeout)

    @property
    def done(self) -> bool:
        return self._done.is_set()

    def kill(self) -> None:
        raise NotImplementedError("this launcher cannot kill agents")

    def __repr__(self) -> str:
        return f"RunningAgent({self.agent_id}, {self.status.value})"


class Launcher(abc.ABC):
    restart_policy = RestartPolicy()

    @abc.abstractmethod
    def launch(self, source: BehaviorSource, exchange: Exchange, agent_id: EntityId) -> RunningAgent:
        """Start the agent and return immediately."""

    def close(self) -> None:
        """Wait for or release launcher resources."""


class ThreadAgent(RunningAgent):
    def __init__(self, agent_id: EntityId, behavior_name: str, agent: Agent) -> None:
        super().__init__(agent_id, behavior_name)
        self.agent = agent
        self.thread: threading.Thread | None = None


class ThreadLauncher(Launcher):
    """Runs each agent in a thread of this process. No restarts."""

    def __init__(
        self,
        *,
        loop_error_policy: LoopErrorPolicy = LoopErrorPolicy.SHUTDOWN_ON_ERROR,
        join_timeout: float = 5.0,
        threshold: int | None = DEFAULT_THRESHOLD,
        action_pool_size: int | None = None,
    ) -> None:
        self.loop_error_policy = loop_error_policy
        self.join_timeout = join_timeout
        self.threshold = threshold
        self.action_pool_size = action_pool_size
        self._agents: list[ThreadAgent] = []

    def launch(self, source: BehaviorSource, exchange: Exchange, agent_id: EntityId) -> ThreadAgent:
        behavior = source.build()
        behavior.agent_id = agent_id
        agent = Agent(
            behavior,
            exchange.connect(agent_id),
            loop_error_policy=self.loop_error_policy,
            join_timeout=self.join_timeout,
            threshold=self.threshold,
            action_pool_size=self.action_pool_size,
        )
        record = ThreadAgent(agent_id, agent.spec.name, agent)

        def run() -> None:
            record.status = AgentStatus.RUNNING
            try:
                record.result = agent.run()
            except AgentSetupError as exc:
                record.error = exc
                record._finish(AgentStatus.FAILED)
                return
            except BaseException as exc:
                logger.exception("agent %s crashed", agent_id)
                record.error = exc
                record._finish(AgentStatus.FAILED)
                return
            record._finish(AgentStatus.STOPPED)

        record.thread = threading.Thread(target=run, name=f"agent-{agent.spec.name}", daemon=True)
        record.thread.start()
        self._agents.append(record)
        return record

    def close(self) -> None:
        for record in self._agents:
            record.wait(self.join_timeout + 1)
