"""In-process exchange backed by in-memory queues."""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field

from agentry.behavior import BehaviorSpec
from agentry.dataplane import ObjectDepot
from agentry.errors import AgentryTimeoutError, MailboxClosedError, UnknownEntityError
from agentry.exchange.base import Exchange, ExchangeClient
from agentry.ids import EntityId, Role
from agentry.messages import Envelope


@dataclass
class _Mailbox:
    cond: threading.Condition
    queue: deque[Envelope] = field(default_factory=deque)
    closed: bool = False
    spec: BehaviorSpec | None = None


class LocalExchange(Exchange):
    """Mailboxes live in this process; sends never block the sender."""

    def __init__(self) -> None:
        self._mailboxes: dict[EntityId, _Mailbox] = {}
        self._lock = threading.Lock()
        self.depot = ObjectDepot()

    def register(self, role: Role, spec: BehaviorSpec | None = None) -> EntityId:
        while True:
            entity = EntityId.new(role)
            with self._lock:
                if entity not in self._mailboxes:
                    self._mailboxes[entity] = _Mailbox(threading.Condition(threading.Lock()), spec=spec)
                    return entity

    def _box(self, entity: EntityId) -> _Mailbox:
        try:
            return self._mailboxes[entity]
        except KeyError:
            raise UnknownEntityError(f"unknown entity {entity}") from None

    def connect(self, entity_id: EntityId) -> LocalClient:
        self._box(entity_id)
        return LocalClient(self, entity_id)

    def send(self, envelope: Envelope) -> None:
        box = self._box(envelope.dest)
        with box.cond:
            if box.closed:
                raise MailboxClosedError(f"mailbox {envelope.dest} is closed")
            box.queue.append(envelope)
            box.cond.notify()

    def recv(self, entity_id: EntityId, timeout: float | None = None) -> Envelope:
        box = self._box(entity_id)
        deadline = None if timeout is None else time.monotonic() + timeout
        with box.cond:
            while not box.queue:
                if box.closed:
                    raise MailboxClosedError(f"mailbox {entity_id} is closed")
                if deadline is None:
                    box.cond.wait()
                else:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        raise AgentryTimeoutError(f"no message for {entity_id} within {timeout}s")
                    box.cond.wait(remaining)
            return box.queue.popleft()

    def close(self, entity_id: EntityId) -> None:
        box = self._box(entity_id)
        with box.cond:
            box.closed = True
            box.cond.notify_all()

    def is_closed(self, entity_id: EntityId) -> bool:
        return self._box(entity_id).closed

    def discover(self, behavior_name: str) -> list[EntityId]:
        with self._lock:
            items = list(self._mailboxes.items())
        return sorted(
            e
            for e, box in items
            if e.is_agent and not box.closed and box.spec is not None and box.spec.is_a(behavior_name)
        )

    def pending(self, entity_id: EntityId) -> int:
        box = self._box(entity_id)
        with box.cond:
            return len(box.queue)


class LocalClient(ExchangeClient):
    def __init__(self, exchange: LocalExchange, entity_id: EntityId) -> None:
        self.exchange = exchange
        self.entity_id = entity_id
        self.depot = exchange.depot

    def send(self, envelope: Envelope) -> None:
        self.exchange.send(envelope)

    def recv(self, timeout: float | None = None) -> Envelope:
        return self.exchange.recv(self.entity_id, timeout)

    def __repr__(self) -> str:
        return f"LocalClient({self.entity_id})"
