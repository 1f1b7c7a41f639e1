"""Error kinds shared by every layer.

Each remote failure is described by an :class:`ErrorInfo` on the wire and
surfaces locally as the matching :class:`AgentryError` subclass.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class ErrorKind(enum.IntEnum):
    ACTION_RAISED = 1
    UNKNOWN_ACTION = 2
    MAILBOX_CLOSED = 3
    TIMEOUT = 4
    TRANSPORT_FAILURE = 5


@dataclass(frozen=True)
class ErrorInfo:
    kind: ErrorKind
    detail: str = ""

    def to_exception(self) -> AgentryError:
        return _EXCEPTIONS[self.kind](self.detail, info=self)


class AgentryError(Exception):
    kind: ErrorKind = ErrorKind.TRANSPORT_FAILURE

    def __init__(self, detail: str = "", *, info: ErrorInfo | None = None) -> None:
        super().__init__(detail)
        self.detail = detail
        self.info = info if info is not None else ErrorInfo(self.kind, detail)


class ActionRaisedError(AgentryError):
    """An action raised on the remote agent; ``detail`` holds its text."""

    kind = ErrorKind.ACTION_RAISED


class UnknownActionError(AgentryError):
    kind = ErrorKind.UNKNOWN_ACTION


class MailboxClosedError(AgentryError):
    kind = ErrorKind.MAILBOX_CLOSED


class AgentryTimeoutError(AgentryError, TimeoutError):
    kind = ErrorKind.TIMEOUT


class TransportFailureError(AgentryError):
    kind = ErrorKind.TRANSPORT_FAILURE


class UnknownEntityError(AgentryError, KeyError):
    """Raised for operations on an id the exchange has never registered."""

    def __str__(self) -> str:
        return self.detail


class IntegrityError(AgentryError):
    """Resolved object bytes did not match the reference checksum."""


_EXCEPTIONS: dict[ErrorKind, type[AgentryError]] = {
    ErrorKind.ACTION_RAISED: ActionRaisedError,
    ErrorKind.UNKNOWN_ACTION: UnknownActionError,
    ErrorKind.MAILBOX_CLOSED: MailboxClosedError,
    ErrorKind.TIMEOUT: AgentryTimeoutError,
    ErrorKind.TRANSPORT_FAILURE: TransportFailureError,
}
