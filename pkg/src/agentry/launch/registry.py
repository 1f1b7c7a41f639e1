"""Behavior lookup by name, so child processes can rebuild a behavior."""

from __future__ import annotations

import importlib
from typing import TypeVar

from agentry.behavior import Behavior

B = TypeVar("B", bound=type[Behavior])

_REGISTRY: dict[str, type[Behavior]] = {}


def register_behavior(cls: B, name: str | None = None) -> B:
    _REGISTRY[name or cls.__name__] = cls
    return cls


def behavior_path(cls: type[Behavior]) -> str:
    """Importable ``module:qualname`` that another process can resolve."""
    if cls.__module__ == "__main__" or "<locals>" in cls.__qualname__:
        raise TypeError(f"{cls.__qualname__} is not importable from another process")
    return f"{cls.__module__}:{cls.__qualname__}"


def resolve_behavior(name: str) -> type[Behavior]:
    """Look up a registered name, or import a ``module:qualname`` path."""
    if name in _REGISTRY:
        return _REGISTRY[name]
    module, sep, qualname = name.partition(":")
    if not sep:
        raise LookupError(f"unknown behavior {name!r}")
    obj: object = importlib.import_module(module)
    for part in qualname.split("."):
        obj = getattr(obj, part)
    if not (isinstance(obj, type) and issubclass(obj, Behavior)):
        raise TypeError(f"{name!r} is not a Behavior subclass")
    return obj
