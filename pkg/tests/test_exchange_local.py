import threading
import time

import pytest

from agentry.behavior import Behavior
from agentry.errors import AgentryTimeoutError, MailboxClosedError, UnknownEntityError
from agentry.exchange.local import LocalExchange
from agentry.ids import EntityId, Role
from agentry.messages import Envelope, Ping


def env(src: EntityId, dest: EntityId) -> Envelope:
    return Envelope(src, dest, Ping())


def test_fifo_and_timeout() -> None:
    ex = LocalExchange()
    a = ex.create_client()
    b = ex.create_client()
    sent = [env(a.entity_id, b.entity_id) for _ in range(5)]
    for e in sent:
        a.send(e)
    assert [b.recv(timeout=1) for _ in range(5)] == sent
    with pytest.raises(AgentryTimeoutError):
        b.recv(timeout=0.01)


def test_recv_wakes_on_send() -> None:
    ex = LocalExchange()
    a, b = ex.create_client(), ex.create_client()
    threading.Timer(0.05, lambda: a.send(env(a.entity_id, b.entity_id))).start()
    start = time.monotonic()
    b.recv(timeout=2)
    assert time.monotonic() - start < 1


def test_closed_mailbox_drains_then_raises() -> None:
    ex = LocalExchange()
    a, b = ex.create_client(), ex.create_client()
    a.send(env(a.entity_id, b.entity_id))
    ex.close(b.entity_id)
    with pytest.raises(MailboxClosedError):
        a.send(env(a.entity_id, b.entity_id))
    assert b.recv(timeout=1).dest == b.entity_id
    with pytest.raises(MailboxClosedError):
        b.recv(timeout=1)
    ex.close(b.entity_id)  # idempotent


def test_close_wakes_blocked_receiver() -> None:
    ex = LocalExchange()
    b = ex.create_client()
    threading.Timer(0.05, lambda: ex.close(b.entity_id)).start()
    with pytest.raises(MailboxClosedError):
        b.recv(timeout=5)


def test_unknown_entity() -> None:
    ex = LocalExchange()
    a = ex.create_client()
    with pytest.raises(UnknownEntityError):
        a.send(env(a.entity_id, EntityId.new(Role.AGENT)))
    with pytest.raises(UnknownEntityError):
        ex.connect(EntityId.new(Role.AGENT))


class Folder(Behavior):
    pass


class OpenFolder(Folder):
    pass


def test_discover_by_ancestry() -> None:
    ex = LocalExchange()
    f = ex.register(Role.AGENT, Folder.behavior_spec())
    o = ex.register(Role.AGENT, OpenFolder.behavior_spec())
    assert sorted(ex.discover("Folder")) == sorted([f, o])
    assert ex.discover("OpenFolder") == [o]
    assert ex.discover("Nothing") == []
    ex.close(o)
    assert ex.discover("Folder") == [f]
