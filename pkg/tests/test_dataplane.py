import hashlib
import os
import pickle
import threading
from dataclasses import replace
from typing import Callable

import pytest

from agentry import codec
from agentry.dataplane import ObjectDepot, Proxy, ValueCodec, auto_payload, materialize
from agentry.errors import IntegrityError, TransportFailureError
from agentry.exchange.dist import DistClient, DistExchange
from agentry.ids import Role
from agentry.messages import Inline, PeerLocation, Reference, StoreLocation

Factory = Callable[..., DistExchange]


@pytest.fixture
def peers(dist_factory: Factory):
    ex = dist_factory()
    a = ex.connect(ex.register(Role.AGENT))
    b = ex.connect(ex.register(Role.AGENT))
    c = ex.connect(ex.register(Role.AGENT))
    yield a, b, c
    for x in (a, b, c):
        x.disconnect()


def test_ref_is_small_and_carries_checksum(peers: tuple[DistClient, ...]) -> None:
    a, _, _ = peers
    data = os.urandom(1_000_000)
    ref = a.depot.proxy(data)
    assert ref.size == len(data)
    assert ref.checksum == hashlib.sha256(data).digest()
    assert ref.locations == (a.endpoint,)
    assert len(codec.encode_proxyref(ref)) <= 512


def test_peer_fetch_and_cache(peers: tuple[DistClient, ...]) -> None:
    a, b, _ = peers
    data = os.urandom(300_000)
    ref = a.depot.proxy(data)
    assert b.depot.resolve(ref) == data
    assert b.depot.resolve(ref) == data
    assert b.depot.stats.peer_fetches == 1
    assert b.depot.stats.cache_hits == 1
    assert a.depot.stats.served == 1
    # the owner resolves its own objects locally
    assert a.depot.resolve(ref) == data
    assert a.depot.stats.transfers == 0


def test_store_fallback_when_owner_unreachable(store_endpoint: str) -> None:
    ex = DistExchange(store_endpoint, store_fallback=True)
    a = ex.connect(ex.register(Role.AGENT))
    b = ex.connect(ex.register(Role.AGENT))
    data = os.urandom(50_000)
    ref = a.depot.proxy(data)
    assert isinstance(ref.locations[1], StoreLocation)
    a.disconnect()  # the owner's listener is gone
    assert b.depot.resolve(ref) == data
    assert b.depot.stats.store_fetches == 1
    b.disconnect()
    ex.shutdown()


def test_relay_only_owner_uploads_to_store(store_endpoint: str) -> None:
    ex = DistExchange(store_endpoint, direct_listen=False)
    a = ex.connect(ex.register(Role.AGENT))
    b = ex.connect(ex.register(Role.AGENT))
    ref = a.depot.proxy(b"z" * 1000)
    assert [type(x) for x in ref.locations] == [StoreLocation]
    assert b.depot.resolve(ref) == b"z" * 1000
    a.depot.release(ref)
    c = ex.connect(ex.register(Role.AGENT))
    with pytest.raises(TransportFailureError):
        c.depot.resolve(ref)
    for x in (a, b, c):
        x.disconnect()
    ex.shutdown()


def test_checksum_mismatch_raises(peers: tuple[DistClient, ...]) -> None:
    a, b, _ = peers
    ref = a.depot.proxy(b"genuine")
    forged = replace(ref, checksum=hashlib.sha256(b"other").digest())
    with pytest.raises(IntegrityError):
        b.depot.resolve(forged)


def test_unresolvable_ref(peers: tuple[DistClient, ...]) -> None:
    a, b, _ = peers
    ref = a.depot.proxy(b"gone")
    a.depot.release(ref)
    with pytest.raises(TransportFailureError):
        b.depot.resolve(ref)
    dead = replace(ref, locations=(PeerLocation("127.0.0.1", 1),))
    with pytest.raises(TransportFailureError):
        b.depot.resolve(dead)


def test_expired_pin_is_not_served() -> None:
    depot = ObjectDepot(ttl=-1)
    ref = depot.proxy(b"x")
    assert depot.serve(ref.object_id) is None


def test_concurrent_resolves_coalesce(peers: tuple[DistClient, ...]) -> None:
    a, b, _ = peers
    data = os.urandom(5_000_000)
    ref = a.depot.proxy(data)
    results: list[bytes] = []
    barrier = threading.Barrier(8)

    def worker() -> None:
        barrier.wait()
        results.append(b.depot.resolve(ref))

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == [data] * 8
    assert b.depot.stats.peer_fetches == 1


def test_resolve_async(peers: tuple[DistClient, ...]) -> None:
    a, b, _ = peers
    data = os.urandom(200_000)
    proxy = Proxy(a.depot.proxy(data), b.depot)
    fut = proxy.resolve_async()
    assert fut.result(timeout=5) == data
    assert proxy.resolved
    assert bytes(proxy) == data


def test_forwarding_moves_data_once(peers: tuple[DistClient, ...]) -> None:
    a, b, c = peers
    data = os.urandom(400_000)
    at_a = ValueCodec(a.depot)
    at_b = ValueCodec(b.depot)
    at_c = ValueCodec(c.depot)
    wire1 = at_a.dumps({"payload": data})
    assert len(wire1) < 1024
    forwarded = at_b.loads(wire1)["payload"]
    assert isinstance(forwarded, Proxy) and not forwarded.resolved
    wire2 = at_b.dumps({"payload": forwarded})
    assert len(wire2) < 1024
    assert bytes(at_c.loads(wire2)["payload"]) == data
    assert b.depot.stats.transfers == 0
    assert c.depot.stats.transfers == 1
    assert a.depot.stats.served == 1


def test_value_codec_threshold() -> None:
    depot = ObjectDepot()
    small = ValueCodec(depot, threshold=100).dumps(b"s" * 99)
    assert pickle.loads(small) == b"s" * 99
    inline_only = ValueCodec(depot, threshold=None)
    assert inline_only.loads(inline_only.dumps(b"b" * 1000)) == b"b" * 1000


def test_proxy_pickles_to_reference_only() -> None:
    depot = ObjectDepot()
    proxy = Proxy(depot.proxy(b"q" * 10_000), depot)
    proxy.resolve()
    clone = pickle.loads(pickle.dumps(proxy))
    assert clone.ref == proxy.ref and not clone.resolved
    assert len(pickle.dumps(proxy)) < 1024
    assert len(proxy) == 10_000
    assert proxy == b"q" * 10_000
    assert proxy.count(b"q") == 10_000  # attribute access goes to the value


def test_auto_payload_and_materialize() -> None:
    depot = ObjectDepot()
    assert auto_payload(depot, b"x" * 10, threshold=100) == Inline(b"x" * 10)
    big = auto_payload(depot, b"y" * 100, threshold=100)
    assert isinstance(big, Reference)
    assert materialize(depot, big) == b"y" * 100
    assert isinstance(auto_payload(None, b"y" * 100, threshold=1), Inline)
    with pytest.raises(TransportFailureError):
        materialize(None, big)
