"""Envelope and payload value types."""

from __future__ import annotations

import enum
import uuid
from dataclasses import dataclass, field
from typing import Union

from agentry.errors import ErrorInfo
from agentry.ids import EntityId


class Kind(enum.IntEnum):
    ACTION_REQUEST = 1
    ACTION_RESPONSE = 2
    PING = 3
    PING_RESPONSE = 4
    SHUTDOWN = 5


@dataclass(frozen=True)
class PeerLocation:
    host: str
    port: int

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"


@dataclass(frozen=True)
class StoreLocation:
    key: str


Location = Union[PeerLocation, StoreLocation]


@dataclass(frozen=True)
class ProxyRef:
    """Descriptor of an object held out-of-band.

    ``locations`` are tried in order when resolving. The descriptor never
    carries the object bytes, so its encoded size does not depend on ``size``.
    """

    object_id: uuid.UUID
    size: int
    origin: EntityId
    checksum: bytes
    locations: tuple[Location, ...] = ()


@dataclass(frozen=True)
class Inline:
    data: bytes

    @property
    def size(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class Reference:
    ref: ProxyRef


Payload = Union[Inline, Reference]


@dataclass(frozen=True)
class ActionRequest:
    action: str
    payload: Payload

    kind = Kind.ACTION_REQUEST


@dataclass(frozen=True)
class ActionResponse:
    """Outcome of an action; exactly one of ``result`` and ``error`` is set."""

    request_id: uuid.UUID
    result: Payload | None = None
    error: ErrorInfo | None = None

    kind = Kind.ACTION_RESPONSE

    def __post_init__(self) -> None:
        if (self.result is None) == (self.error is None):
            raise ValueError("ActionResponse needs exactly one of result or error")


@dataclass(frozen=True)
class Ping:
    kind = Kind.PING


@dataclass(frozen=True)
class PingResponse:
    """Reply to a Ping, also used to acknowledge a Shutdown."""

    request_id: uuid.UUID

    kind = Kind.PING_RESPONSE


@dataclass(frozen=True)
class Shutdown:
    terminal: bool = True

    kind = Kind.SHUTDOWN


Body = Union[ActionRequest, ActionResponse, Ping, PingResponse, Shutdown]


@dataclass(frozen=True)
class Envelope:
    src: EntityId
    dest: EntityId
    body: Body
    message_id: uuid.UUID = field(default_factory=uuid.uuid4)

    @property
    def kind(self) -> Kind:
        return self.body.kind

    def reply(self, body: Body) -> Envelope:
        return Envelope(src=self.dest, dest=self.src, body=body)
