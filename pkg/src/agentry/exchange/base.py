"""Exchange interfaces.

An :class:`Exchange` hosts mailboxes: it registers entities, closes their
mailboxes and answers discovery queries. An :class:`ExchangeClient` is one
entity's live binding to its mailbox; it sends envelopes on the entity's
behalf and receives from the entity's own mailbox.
"""

from __future__ import annotations

import abc
from typing import TYPE_CHECKING

from agentry.behavior import BehaviorSpec
from agentry.ids import EntityId, Role
from agentry.messages import Envelope

if TYPE_CHECKING:
    from agentry.dataplane import ObjectDepot


class Exchange(abc.ABC):
    @abc.abstractmethod
    def register(self, role: Role, spec: BehaviorSpec | None = None) -> EntityId:
        """Create a fresh entity with an open, empty mailbox."""

    @abc.abstractmethod
    def connect(self, entity_id: EntityId) -> ExchangeClient:
        """Bind to an already registered mailbox."""

    @abc.abstractmethod
    def close(self, entity_id: EntityId) -> None:
        """Close a mailbox permanently; queued messages stay drainable."""

    @abc.abstractmethod
    def discover(self, behavior_name: str) -> list[EntityId]:
        """Ids of open agents whose behavior ancestry contains the name."""

    def create_client(self) -> ExchangeClient:
        return self.connect(self.register(Role.CLIENT))

    def shutdown(self) -> None:
        """Release resources held by this exchange object."""


class ExchangeClient(abc.ABC):
    entity_id: EntityId
    exchange: Exchange
    depot: ObjectDepot | None = None

    @abc.abstractmethod
    def send(self, envelope: Envelope) -> None:
        """Deliver to ``envelope.dest``; raises MailboxClosedError if closed."""

    @abc.abstractmethod
    def recv(self, timeout: float | None = None) -> Envelope:
        """Next envelope from the own mailbox.

        Raises AgentryTimeoutError when nothing arrives in time and
        MailboxClosedError once the mailbox is closed and drained.
        """

    def close(self) -> None:
        """Close the own mailbox permanently and go offline."""
        self.exchange.close(self.entity_id)
        self.disconnect()

    def disconnect(self) -> None:
        """Go offline; the mailbox stays open and keeps accumulating."""

    def discover(self, behavior_name: str) -> list[EntityId]:
        return self.exchange.discover(behavior_name)

    def __enter__(self) -> ExchangeClient:
        return self

    def __exit__(self, *exc: object) -> None:
        self.disconnect()
