"""Thread-based middleware for stateful agents that exchange messages."""

from agentry.behavior import Behavior, BehaviorSpec, action, event, loop, timer
from agentry.dataplane import Proxy
from agentry.errors import (
    ActionRaisedError,
    AgentryError,
    AgentryTimeoutError,
    MailboxClosedError,
    TransportFailureError,
    UnknownActionError,
    UnknownEntityError,
)
from agentry.exchange import DistExchange, LocalExchange
from agentry.handle import Handle
from agentry.ids import EntityId, Role
from agentry.launch import (
    AgentStatus,
    Manager,
    RestartPolicy,
    StateStore,
    SubprocessLauncher,
    ThreadLauncher,
    register_behavior,
)
from agentry.runtime import Agent, CleanShutdown, LoopErrorPolicy, LoopFailure

__version__ = "0.1.0"

__all__ = [
    "ActionRaisedError",
    "Agent",
    "AgentStatus",
    "AgentryError",
    "AgentryTimeoutError",
    "Behavior",
    "BehaviorSpec",
    "CleanShutdown",
    "DistExchange",
    "EntityId",
    "Handle",
    "LocalExchange",
    "LoopErrorPolicy",
    "LoopFailure",
    "MailboxClosedError",
    "Manager",
    "Proxy",
    "RestartPolicy",
    "Role",
    "StateStore",
    "SubprocessLauncher",
    "ThreadLauncher",
    "TransportFailureError",
    "UnknownActionError",
    "UnknownEntityError",
    "action",
    "event",
    "loop",
    "register_behavior",
    "timer",
]
