"""The Manager: one exchange, some launchers, and one multiplexed mailbox."""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from agentry.behavior import Behavior, BehaviorSpec
from agentry.dataplane import DEFAULT_THRESHOLD
from agentry.errors import AgentryError, MailboxClosedError, UnknownEntityError
from agentry.exchange.base import Exchange
from agentry.handle import DEFAULT_TIMEOUT, Handle, MailboxRouter
from agentry.ids import EntityId, Role
from agentry.launch.launcher import AgentStatus, BehaviorSource, Launcher, RunningAgent, ThreadLauncher
from agentry.launch.subprocess import SubprocessAgent

logger = logging.getLogger(__name__)


@dataclass
class ManagedAgent:
    launcher: str
    spec: BehaviorSpec
    source: BehaviorSource
    running: RunningAgent

    @property
    def status(self) -> AgentStatus:
        return self.running.status


class Manager:
    """Launches agents and hands out handles that share one mailbox.

    ``launchers`` may be a single launcher or a mapping of name to launcher;
    the first is the default. Leaving the ``with`` block shuts down every
    agent this manager launched and closes its mailbox. The exchange itself
    stays open unless ``owns_exchange`` is set.
    """

    def __init__(
        self,
        exchange: Exchange,
        launchers: Launcher | Mapping[str, Launcher] | None = None,
        *,
        default_launcher: str | None = None,
        threshold: int | None = DEFAULT_THRESHOLD,
        default_timeout: float = DEFAULT_TIMEOUT,
        owns_exchange: bool = False,
    ) -> None:
        self.exchange = exchange
        if launchers is None:
            launchers = ThreadLauncher(threshold=threshold)
        if isinstance(launchers, Launcher):
            launchers = {"default": launchers}
        if not launchers:
            raise ValueError("a manager needs at least one launcher")
        self.launchers: dict[str, Launcher] = dict(launchers)
        self.default_launcher = default_launcher or next(iter(self.launchers))
        if self.default_launcher not in self.launchers:
            raise KeyError(f"unknown launcher {self.default_launcher!r}")
        self.owns_exchange = owns_exchange
        self.client = exchange.create_client()
        self.router = MailboxRouter(self.client, threshold=threshold, default_timeout=default_timeout)
        self.registry: dict[EntityId, ManagedAgent] = {}
        self._lock = threading.RLock()
        self._closed = False

    @property
    def client_id(self) -> EntityId:
        return self.client.entity_id

    def __enter__(self) -> Manager:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def handle(self, agent_id: EntityId) -> Handle:
        return self.router.handle(agent_id)

    def launch(
        self,
        behavior: Behavior | type[Behavior],
        *,
        args: Sequence[Any] = (),
        kwargs: dict[str, Any] | None = None,
        launcher: str | None = None,
        agent_id: EntityId | None = None,
    ) -> Handle:
        """Register (or reuse) a mailbox, start the agent, and return its handle.

        Passing ``agent_id`` relaunches an agent whose mailbox is still open,
        for example after a non-terminal shutdown; queued messages are then
        delivered to the new instance.
        """
        name = launcher or self.default_launcher
        try:
            chosen = self.launchers[name]
        except KeyError:
            raise KeyError(f"unknown launcher {name!r}") from None
        source = BehaviorSource(behavior, tuple(args), dict(kwargs or {}))
        spec = source.cls.behavior_spec()
        with self._lock:
            if self._closed:
                raise RuntimeError("manager is closed")
            if agent_id is None:
                agent_id = self.exchange.register(Role.AGENT, spec)
            else:
                previous = self.registry.get(agent_id)
                if previous is not None:
                    if previous.spec.name != spec.name:
                        raise ValueError(
                            f"{agent_id} runs {previous.spec.name}, cannot relaunch as {spec.name}"
                        )
                    if not previous.running.done:
                        raise RuntimeError(f"{agent_id} is still running")
            running = chosen.launch(source, self.exchange, agent_id)
            if isinstance(running, SubprocessAgent):
                running.on_failed = self._on_failed
            self.registry[agent_id] = ManagedAgent(name, spec, source, running)
        return self.handle(agent_id)

    def _on_failed(self, running: RunningAgent) -> None:
        self.router.fail_requests_to(
            running.agent_id, MailboxClosedError(f"agent {running.agent_id} failed and was closed")
        )

    def _managed(self, agent_id: EntityId) -> ManagedAgent:
        with self._lock:
            try:
                return self.registry[agent_id]
            except KeyError:
                raise UnknownEntityError(f"{agent_id} was not launched by this manager") from None

    def status(self, agent_id: EntityId) -> AgentStatus:
        return self._managed(agent_id).status

    def running_agent(self, agent_id: EntityId) -> RunningAgent:
        return self._managed(agent_id).running

    def shutdown(
        self,
        agent_id: EntityId | Handle,
        *,
        blocking: bool = False,
        terminal: bool = True,
        timeout: float | None = None,
    ) -> None:
        """Ask an agent to stop; ``blocking`` waits until it has exited."""
        if isinstance(agent_id, Handle):
            agent_id = agent_id.agent_id
        managed = self._managed(agent_id)
        if managed.running.done:
            return
        timeout = timeout if timeout is not None else self.router.default_timeout
        self.handle(agent_id).shutdown(terminal=terminal, blocking=blocking, timeout=timeout)
        if blocking:
            managed.running.wait(timeout)

    def wait(self, agent_id: EntityId, timeout: float | None = None) -> bool:
        return self._managed(agent_id).running.wait(timeout)

    def close(self, timeout: float = 10.0) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            live = [m for m in self.registry.values() if not m.running.done]
        for managed in live:
            try:
                self.handle(managed.running.agent_id).shutdown(terminal=True, blocking=False)
            except AgentryError as exc:
                logger.debug("shutdown of %s failed: %s", managed.running.agent_id, exc)
        deadline = time.monotonic() + timeout
        for managed in live:
            if not managed.running.wait(max(0.0, deadline - time.monotonic())):
                logger.warning("%s did not stop within %.1fs", managed.running.agent_id, timeout)
        for launcher in self.launchers.values():
            launcher.close()
        self.router.close()
        try:
            self.client.close()
        except AgentryError:
            pass
        if self.owns_exchange:
            self.exchange.shutdown()
