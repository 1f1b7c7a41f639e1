import threading
import time
from typing import Callable

import pytest

from agentry import codec
from agentry.errors import AgentryTimeoutError, MailboxClosedError, UnknownEntityError
from agentry.exchange.dist import DistClient, DistExchange, Route
from agentry.ids import EntityId, Role
from agentry.messages import ActionRequest, Envelope, Inline, Ping

Factory = Callable[..., DistExchange]


def pair(ex: DistExchange, **b_overrides: object) -> tuple[DistClient, DistClient]:
    a = ex.connect(ex.register(Role.CLIENT))
    b = ex.connect(ex.register(Role.AGENT), **b_overrides)
    assert b.advertised.wait(5)
    return a, b


def msg(a: DistClient, b: DistClient, data: bytes = b"x") -> Envelope:
    return Envelope(a.entity_id, b.entity_id, ActionRequest("go", Inline(data)))


def teardown(*clients: DistClient) -> None:
    for c in clients:
        c.disconnect()


def test_direct_delivery_preferred(dist_factory: Factory) -> None:
    ex = dist_factory()
    a, b = pair(ex)
    sent = [msg(a, b, b"%d" % i) for i in range(20)]
    for e in sent:
        a.send(e)
    assert [b.recv(timeout=2) for _ in sent] == sent
    assert a.counters["direct"] == 20
    assert a.counters["relay"] == 0
    assert a.counters["locate"] == 1  # later sends hit the route cache
    teardown(a, b)


def test_relay_only_peer(dist_factory: Factory) -> None:
    ex = dist_factory()
    a, b = pair(ex, direct_listen=False)
    assert b.endpoint is None
    e = msg(a, b)
    a.send(e)
    assert b.recv(timeout=5) == e
    assert a.counters == {"direct": 0, "relay": 1, "locate": 1, "direct_failures": 0}
    teardown(a, b)


def test_force_relay_skips_direct(dist_factory: Factory) -> None:
    ex = dist_factory(force_relay=True)
    a, b = pair(ex)
    assert b.endpoint is not None
    for _ in range(3):
        a.send(msg(a, b))
        b.recv(timeout=5)
    assert a.counters["relay"] == 3
    assert a.counters["locate"] == 0
    teardown(a, b)


def test_dead_listener_demotes_to_relay(dist_factory: Factory) -> None:
    ex = dist_factory()
    a, b = pair(ex)
    a.send(msg(a, b))
    b.recv(timeout=2)
    assert b.server is not None
    b.server.stop()  # the direct path breaks but the mailbox lives on
    e = msg(a, b)
    a.send(e)
    assert b.recv(timeout=5) == e
    assert a.counters["direct_failures"] >= 1
    assert a.counters["relay"] == 1
    assert not a.routes[b.entity_id].direct
    # the demoted route stays on the relay without re-probing
    a.send(msg(a, b))
    b.recv(timeout=5)
    assert a.counters["relay"] == 2
    teardown(a, b)


def test_send_to_unknown_entity(dist_factory: Factory) -> None:
    ex = dist_factory()
    a = ex.connect(ex.register(Role.CLIENT))
    with pytest.raises(UnknownEntityError):
        a.send(Envelope(a.entity_id, EntityId.new(Role.AGENT), Ping()))
    teardown(a)


@pytest.mark.parametrize("force_relay", [False, True])
def test_close_drains_then_raises(dist_factory: Factory, force_relay: bool) -> None:
    ex = dist_factory(force_relay=force_relay)
    a, b = pair(ex)
    e = msg(a, b)
    a.send(e)
    time.sleep(0.2)
    ex.close(b.entity_id)
    with pytest.raises(MailboxClosedError):
        a.send(msg(a, b))
    assert b.recv(timeout=5) == e
    with pytest.raises(MailboxClosedError):
        b.recv(timeout=5)
    teardown(a, b)


def test_close_notify_wakes_receiver(dist_factory: Factory) -> None:
    ex = dist_factory()
    a, b = pair(ex)
    threading.Timer(0.1, lambda: ex.close(b.entity_id)).start()
    start = time.monotonic()
    with pytest.raises(MailboxClosedError):
        b.recv(timeout=10)
    assert time.monotonic() - start < 5
    teardown(a, b)


def test_duplicates_are_dropped(dist_factory: Factory) -> None:
    ex = dist_factory()
    a, b = pair(ex)
    e = msg(a, b)
    a.send(e)
    ex.store.put_msg(b.entity_id, codec.encode_body(e))  # same message via the relay
    assert b.recv(timeout=2) == e
    with pytest.raises(AgentryTimeoutError):
        b.recv(timeout=1.5)
    teardown(a, b)


def test_wrong_destination_is_not_accepted(dist_factory: Factory) -> None:
    ex = dist_factory()
    a, b = pair(ex)
    c = ex.connect(ex.register(Role.AGENT))
    assert c.advertised.wait(5)
    # a stale cache entry points c's traffic at b's listener
    a.routes[c.entity_id] = Route(b.endpoint, time.monotonic())
    e = Envelope(a.entity_id, c.entity_id, Ping())
    a.send(e)
    assert c.recv(timeout=5) == e
    with pytest.raises(AgentryTimeoutError):
        b.recv(timeout=0.3)
    teardown(a, b, c)


def test_disconnect_requeues_and_reconnect_receives(dist_factory: Factory) -> None:
    ex = dist_factory(force_relay=True)
    a, b = pair(ex)
    sent = [msg(a, b, b"%d" % i) for i in range(5)]
    for e in sent:
        a.send(e)
    time.sleep(0.3)
    b.disconnect()
    b2 = ex.connect(b.entity_id)
    assert [b2.recv(timeout=5) for _ in sent] == sent
    teardown(a, b2)


def test_discover_through_exchange(dist_factory: Factory) -> None:
    from agentry.behavior import Behavior

    class Scout(Behavior):
        pass

    ex = dist_factory()
    agent = ex.register(Role.AGENT, Scout.behavior_spec())
    assert ex.discover("Scout") == [agent]
    ex.close(agent)
    assert ex.discover("Scout") == []


def test_reconnect_keeps_per_sender_order(dist_factory: Factory) -> None:
    ex = dist_factory()
    a, b = pair(ex)
    b.disconnect()
    backlog = [msg(a, b, b"old%d" % i) for i in range(100)]
    for e in backlog:
        a.send(e)  # relayed while b is offline
    b2 = ex.connect(b.entity_id)
    a.routes.clear()  # a looks b up again and may find the new endpoint
    fresh = [msg(a, b2, b"new%d" % i) for i in range(20)]
    for e in fresh:
        a.send(e)
    assert [b2.recv(timeout=5) for _ in range(120)] == backlog + fresh
    teardown(a, b2)


def test_endpoint_is_advertised_after_backlog_drains(dist_factory: Factory) -> None:
    ex = dist_factory()
    a, b = pair(ex)
    assert ex.store.locate(b.entity_id) == b.endpoint
    b.disconnect()
    assert ex.store.locate(b.entity_id) is None
    teardown(a)
