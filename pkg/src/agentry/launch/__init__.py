"""Launchers, the Manager facade, and checkpoint storage."""

from agentry.launch.launcher import (
    AgentStatus,
    BehaviorSource,
    Launcher,
    RestartPolicy,
    RunningAgent,
    ThreadLauncher,
)
from agentry.launch.manager import Manager
from agentry.launch.registry import register_behavior, resolve_behavior
from agentry.launch.state import StateStore
from agentry.launch.subprocess import SubprocessLauncher

__all__ = [
    "AgentStatus",
    "BehaviorSource",
    "Launcher",
    "Manager",
    "RestartPolicy",
    "RunningAgent",
    "StateStore",
    "SubprocessLauncher",
    "ThreadLauncher",
    "register_behavior",
    "resolve_behavior",
]
