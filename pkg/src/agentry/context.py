"""Per-thread binding of the running entity's router and object depot.

The runtime sets these in every thread it owns so that handles and proxies
unpickled inside an action or loop attach to the agent's own mailbox.
"""

from __future__ import annotations

import threading
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from agentry.dataplane import ObjectDepot
    from agentry.handle import MailboxRouter

_local = threading.local()


def bind(router: MailboxRouter | None, depot: ObjectDepot | None) -> None:
    _local.router = router
    _local.depot = depot


def current_router() -> MailboxRouter | None:
    return getattr(_local, "router", None)


def current_depot() -> ObjectDepot | None:
    return getattr(_local, "depot", None)
