"""Small helpers for running agents in-process."""

from __future__ import annotations

import threading
from typing import Any

from agentry.behavior import Behavior
from agentry.exchange.base import Exchange
from agentry.ids import Role
from agentry.runtime import Agent


class Running:
    def __init__(self, agent: Agent) -> None:
        self.agent = agent
        self.result: Any = None
        self.error: BaseException | None = None
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.thread.start()

    def _run(self) -> None:
        try:
            self.result = self.agent.run()
        except BaseException as exc:
            self.error = exc

    def join(self, timeout: float = 10) -> Any:
        self.thread.join(timeout)
        assert not self.thread.is_alive(), "agent did not stop"
        if self.error is not None:
            raise self.error
        return self.result


def start_agent(exchange: Exchange, behavior: Behavior, **kwargs: Any) -> Running:
    agent_id = exchange.register(Role.AGENT, behavior.spec)
    agent = Agent(behavior, exchange.connect(agent_id), **kwargs)
    running = Running(agent)
    agent.started.wait(10)
    return running
