"""Entity identifiers: the addresses of agent and client mailboxes."""

from __future__ import annotations

import enum
import functools
import uuid
from dataclasses import dataclass, field


class Role(enum.IntEnum):
    AGENT = 0
    CLIENT = 1


_PREFIX = {Role.AGENT: "a", Role.CLIENT: "c"}
_ROLE_FOR_PREFIX = {v: k for k, v in _PREFIX.items()}


@functools.total_ordering
@dataclass(frozen=True)
class EntityId:
    """Globally unique mailbox address.

    The text form is ``a:<hex>`` for agents and ``c:<hex>`` for clients.
    Ordering follows the hex form so sorted ids are stable across processes.
    """

    uid: uuid.UUID
    role: Role = field(default=Role.AGENT)

    @classmethod
    def new(cls, role: Role) -> EntityId:
        return cls(uuid.uuid4(), Role(role))

    @classmethod
    def parse(cls, text: str) -> EntityId:
        prefix, sep, rest = text.partition(":")
        if not sep or prefix not in _ROLE_FOR_PREFIX:
            raise ValueError(f"invalid entity id {text!r}")
        if len(rest) != 32 or rest != rest.lower():
            raise ValueError(f"invalid entity id {text!r}")
        return cls(uuid.UUID(hex=rest), _ROLE_FOR_PREFIX[prefix])

    @classmethod
    def from_bytes(cls, raw: bytes) -> EntityId:
        """Decode the 17-byte wire form (16 uuid bytes, then one role byte)."""
        if len(raw) != 17:
            raise ValueError(f"entity id must be 17 bytes, got {len(raw)}")
        return cls(uuid.UUID(bytes=bytes(raw[:16])), Role(raw[16]))

    def to_bytes(self) -> bytes:
        return self.uid.bytes + bytes((self.role,))

    @property
    def is_agent(self) -> bool:
        return self.role is Role.AGENT

    def __str__(self) -> str:
        return f"{_PREFIX[self.role]}:{self.uid.hex}"

    def __repr__(self) -> str:
        return f"EntityId({str(self)!r})"

    def __lt__(self, other: object) -> bool:
        if not isinstance(other, EntityId):
            return NotImplemented
        return (self.uid.hex, self.role) < (other.uid.hex, other.role)
