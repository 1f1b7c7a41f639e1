"""Behavior definitions: actions, control loops, lifecycle callbacks.

A behavior is a plain class deriving from :class:`Behavior`. Methods marked
with :func:`action` can be invoked remotely; methods marked with :func:`loop`,
:func:`timer` or :func:`event` run autonomously while the agent is alive::

    class Example(Behavior):
        def __init__(self) -> None:
            self.count = 0

        @action
        def square(self, value: float) -> float:
            return value**2

        @loop
        def counter(self, shutdown: threading.Event) -> None:
            while not shutdown.wait(1):
                self.count += 1
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar, TypeVar, Union

F = TypeVar("F", bound=Callable[..., Any])

_ACTION_ATTR = "_agentry_action"
_LOOP_ATTR = "_agentry_loop"


@dataclass(frozen=True)
class PlainLoop:
    pass


@dataclass(frozen=True)
class TimerLoop:
    interval: float

    def __post_init__(self) -> None:
        if not self.interval > 0:
            raise ValueError("timer interval must be positive")


@dataclass(frozen=True)
class EventLoop:
    event: str


LoopKind = Union[PlainLoop, TimerLoop, EventLoop]


def _check_name(name: str) -> None:
    if not name or not name.isascii() or not name.isidentifier():
        raise ValueError(f"{name!r} is not a non-empty ASCII identifier")


@dataclass(frozen=True)
class BehaviorSpec:
    """Portable description of a behavior, used for discovery and dispatch."""

    name: str
    ancestry: tuple[str, ...]
    actions: frozenset[str] = field(default_factory=frozenset)
    loops: frozenset[str] = field(default_factory=frozenset)
    max_action_concurrency: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "ancestry", tuple(self.ancestry))
        object.__setattr__(self, "actions", frozenset(self.actions))
        object.__setattr__(self, "loops", frozenset(self.loops))
        if not self.ancestry or self.ancestry[0] != self.name:
            raise ValueError("ancestry must start with the behavior name")
        if len(set(self.ancestry)) != len(self.ancestry):
            raise ValueError("ancestry contains duplicates")
        if self.actions & self.loops:
            raise ValueError(f"names used as both action and loop: {self.actions & self.loops}")
        for n in (*self.ancestry, *self.actions, *self.loops):
            _check_name(n)
        if self.max_action_concurrency is not None and self.max_action_concurrency < 1:
            raise ValueError("max_action_concurrency must be positive")

    def is_a(self, name: str) -> bool:
        return behavior_is_a(self, name)

    def to_json(self) -> bytes:
        return json.dumps(
            {
                "name": self.name,
                "ancestry": list(self.ancestry),
                "actions": sorted(self.actions),
                "loops": sorted(self.loops),
                "max_action_concurrency": self.max_action_concurrency,
            },
            separators=(",", ":"),
        ).encode()

    @classmethod
    def from_json(cls, raw: bytes | str) -> BehaviorSpec:
        d = json.loads(raw)
        return cls(
            name=d["name"],
            ancestry=tuple(d["ancestry"]),
            actions=frozenset(d.get("actions", ())),
            loops=frozenset(d.get("loops", ())),
            max_action_concurrency=d.get("max_action_concurrency"),
        )


def behavior_is_a(spec: BehaviorSpec, name: str) -> bool:
    return name in spec.ancestry


def action(fn: F | None = None, *, name: str | None = None) -> Any:
    """Mark a method as remotely invocable."""

    def mark(f: F) -> F:
        setattr(f, _ACTION_ATTR, name or f.__name__)
        return f

    return mark(fn) if fn is not None else mark


def loop(fn: F) -> F:
    """Mark a method as a control loop; it receives the shutdown event."""
    setattr(fn, _LOOP_ATTR, PlainLoop())
    return fn


def timer(interval: float) -> Callable[[F], F]:
    """Run the decorated method every ``interval`` seconds until shutdown."""
    kind = TimerLoop(interval)

    def mark(fn: F) -> F:
        setattr(fn, _LOOP_ATTR, kind)
        return fn

    return mark


def event(name: str) -> Callable[[F], F]:
    """Run the decorated method once each time ``name`` is fired."""
    kind = EventLoop(name)

    def mark(fn: F) -> F:
        setattr(fn, _LOOP_ATTR, kind)
        return fn

    return mark


class Behavior:
    """Base class for agent behaviors.

    Subclasses keep their state as instance attributes. Unless
    ``internally_synchronized`` is set, the runtime holds ``state_lock``
    while an action or a timer/event iteration runs; plain loops run free
    and should take the lock themselves when touching shared state.
    """

    max_action_concurrency: ClassVar[int | None] = None
    internally_synchronized: ClassVar[bool] = False
    behavior_name: ClassVar[str | None] = None
    # Set by the runtime before on_setup.
    agent_id: Any = None

    @property
    def state_lock(self) -> threading.RLock:
        lock = self.__dict__.get("_agentry_state_lock")
        if lock is None:
            lock = self.__dict__.setdefault("_agentry_state_lock", threading.RLock())
        return lock

    def on_setup(self) -> None:
        """Called before any loop or action runs."""

    def on_shutdown(self) -> None:
        """Called after the last loop has returned."""

    @classmethod
    def _ancestry(cls) -> tuple[str, ...]:
        names = []
        for klass in cls.__mro__:
            if isinstance(klass, type) and issubclass(klass, Behavior):
                names.append(klass.__dict__.get("behavior_name") or klass.__name__)
        return tuple(dict.fromkeys(names))

    @classmethod
    def _members(cls) -> tuple[dict[str, str], dict[str, tuple[str, LoopKind]]]:
        actions: dict[str, str] = {}
        loops: dict[str, tuple[str, LoopKind]] = {}
        seen: set[str] = set()
        for klass in cls.__mro__:
            for attr, value in vars(klass).items():
                if attr in seen:
                    continue
                seen.add(attr)
                if hasattr(value, _ACTION_ATTR):
                    actions[getattr(value, _ACTION_ATTR)] = attr
                elif hasattr(value, _LOOP_ATTR):
                    loops[attr] = (attr, getattr(value, _LOOP_ATTR))
        return actions, loops

    @classmethod
    def behavior_spec(cls) -> BehaviorSpec:
        actions, loops = cls._members()
        ancestry = cls._ancestry()
        return BehaviorSpec(
            name=ancestry[0],
            ancestry=ancestry,
            actions=frozenset(actions),
            loops=frozenset(loops),
            max_action_concurrency=cls.max_action_concurrency,
        )

    @property
    def spec(self) -> BehaviorSpec:
        return self.behavior_spec()

    def actions(self) -> dict[str, Callable[..., Any]]:
        """Map of action name to bound method."""
        names, _ = self._members()
        return {name: getattr(self, attr) for name, attr in names.items()}

    def loops(self) -> dict[str, tuple[Callable[..., Any], LoopKind]]:
        _, loops = self._members()
        return {name: (getattr(self, attr), kind) for name, (attr, kind) in loops.items()}
