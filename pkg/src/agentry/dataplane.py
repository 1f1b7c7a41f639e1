"""Pass-by-reference payloads.

Large values travel out-of-band: the sender pins the bytes in its
:class:`ObjectDepot` and ships a small :class:`~agentry.messages.ProxyRef`.
The receiver resolves the reference by fetching from the owner's direct
endpoint, or from the relay store when the owner is unreachable.
:class:`Proxy` wraps a reference as a lazily resolved value that can be
forwarded to other agents without being materialized.
"""

from __future__ import annotations

import hashlib
import io
import logging
import pickle
import threading
import time
import uuid
from collections import OrderedDict
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

from agentry import codec
from agentry.errors import IntegrityError, TransportFailureError
from agentry.ids import EntityId, Role
from agentry.messages import Inline, Payload, PeerLocation, ProxyRef, Reference, StoreLocation

if TYPE_CHECKING:
    from agentry.exchange.direct import PeerPool
    from agentry.relay.client import StoreClient

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 100_000
DEFAULT_TTL = 3600.0
DEFAULT_CACHE_BYTES = 256 * 1024 * 1024


def checksum(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass
class _Pin:
    data: bytes
    expires: float


@dataclass
class DepotStats:
    peer_fetches: int = 0
    store_fetches: int = 0
    bytes_fetched: int = 0
    cache_hits: int = 0
    served: int = 0
    bytes_served: int = 0

    @property
    def transfers(self) -> int:
        return self.peer_fetches + self.store_fetches


class ObjectDepot:
    """Owned objects served to peers plus an LRU cache of fetched ones.

    Owned objects stay pinned until released or until their TTL passes, so
    an unexpired reference never fails because of local eviction. Fetched
    objects are cached under ``cache_bytes``.
    """

    def __init__(
        self,
        owner: EntityId | None = None,
        *,
        endpoint: PeerLocation | None = None,
        store: StoreClient | None = None,
        peers: PeerPool | None = None,
        ttl: float = DEFAULT_TTL,
        cache_bytes: int = DEFAULT_CACHE_BYTES,
        store_fallback: bool = False,
    ) -> None:
        self.owner = owner or EntityId.new(Role.CLIENT)
        self.endpoint = endpoint
        self.store = store
        self._peers = peers
        self.ttl = ttl
        self.cache_bytes = cache_bytes
        self.store_fallback = store_fallback
        self._pins: dict[uuid.UUID, _Pin] = {}
        self._cache: OrderedDict[uuid.UUID, bytes] = OrderedDict()
        self._cache_size = 0
        self._inflight: dict[uuid.UUID, Future[bytes]] = {}
        self._lock = threading.Lock()
        self._pool: ThreadPoolExecutor | None = None
        self.stats = DepotStats()

    @property
    def peers(self) -> PeerPool:
        if self._peers is None:
            from agentry.exchange.direct import PeerPool

            self._peers = PeerPool()
        return self._peers

    # -- owner side -----------------------------------------------------------

    def proxy(self, data: bytes | bytearray | memoryview) -> ProxyRef:
        data = bytes(data)
        object_id = uuid.uuid4()
        digest = checksum(data)
        with self._lock:
            self._pins[object_id] = _Pin(data, time.monotonic() + self.ttl)
        locations: list[PeerLocation | StoreLocation] = []
        if self.endpoint is not None:
            locations.append(self.endpoint)
        if self.store is not None and (self.endpoint is None or self.store_fallback):
            key = f"obj/{object_id.hex}"
            self.store.obj_put(key, data, ttl=self.ttl)
            locations.append(StoreLocation(key))
        return ProxyRef(object_id, len(data), self.owner, digest, tuple(locations))

    def release(self, ref: ProxyRef) -> None:
        with self._lock:
            self._pins.pop(ref.object_id, None)
        if self.store is not None:
            for loc in ref.locations:
                if isinstance(loc, StoreLocation):
                    self.store.obj_del(loc.key)

    def serve(self, object_id: uuid.UUID) -> bytes | None:
        """Return an owned object for a peer fetch, or None."""
        with self._lock:
            pin = self._pins.get(object_id)
            if pin is None:
                return None
            if pin.expires < time.monotonic():
                del self._pins[object_id]
                return None
            self.stats.served += 1
            self.stats.bytes_served += len(pin.data)
            return pin.data

    def owns(self, object_id: uuid.UUID) -> bool:
        with self._lock:
            return object_id in self._pins

    # -- consumer side --------------------------------------------------------

    def _local(self, object_id: uuid.UUID) -> bytes | None:
        pin = self._pins.get(object_id)
        if pin is not None:
            return pin.data
        data = self._cache.get(object_id)
        if data is not None:
            self._cache.move_to_end(object_id)
        return data

    def _remember(self, object_id: uuid.UUID, data: bytes) -> None:
        if len(data) > self.cache_bytes:
            return
        self._cache[object_id] = data
        self._cache_size += len(data)
        while self._cache_size > self.cache_bytes:
            _, old = self._cache.popitem(last=False)
            self._cache_size -= len(old)

    def resolve(self, ref: ProxyRef) -> bytes:
        with self._lock:
            data = self._local(ref.object_id)
            if data is not None:
                self.stats.cache_hits += 1
                return data
            fut = self._inflight.get(ref.object_id)
            owner = fut is None
            if owner:
                fut = Future()
                self._inflight[ref.object_id] = fut
        assert fut is not None
        if not owner:
            return fut.result()
        try:
            data = self._fetch(ref)
        except BaseException as exc:
            with self._lock:
                self._inflight.pop(ref.object_id, None)
            fut.set_exception(exc)
            raise
        with self._lock:
            self._remember(ref.object_id, data)
            self._inflight.pop(ref.object_id, None)
        fut.set_result(data)
        return data

    def resolve_async(self, ref: ProxyRef) -> Future[bytes]:
        """Start resolving ``ref`` in the background."""
        with self._lock:
            data = self._local(ref.object_id)
            if data is not None:
                self.stats.cache_hits += 1
                done: Future[bytes] = Future()
                done.set_result(data)
                return done
            fut = self._inflight.get(ref.object_id)
            if fut is not None:
                return fut
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=4, thread_name_prefix="depot-resolve")
        return self._pool.submit(self.resolve, ref)

    def _fetch(self, ref: ProxyRef) -> bytes:
        errors = []
        for loc in ref.locations:
            try:
                if isinstance(loc, PeerLocation):
                    data = self.peers.fetch(loc, ref.object_id)
                    kind = "peer"
                else:
                    if self.store is None:
                        errors.append(f"{loc.key}: no store client")
                        continue
                    data = self.store.obj_get(loc.key)
                    kind = "store"
            except (OSError, TransportFailureError) as exc:
                errors.append(f"{loc}: {exc}")
                continue
            if data is None:
                errors.append(f"{loc}: not found")
                continue
            if checksum(data) != ref.checksum:
                raise IntegrityError(f"checksum mismatch for object {ref.object_id}")
            with self._lock:
                if kind == "peer":
                    self.stats.peer_fetches += 1
                else:
                    self.stats.store_fetches += 1
                self.stats.bytes_fetched += len(data)
            return data
        raise TransportFailureError(
            f"could not resolve object {ref.object_id}: " + "; ".join(errors or ["no locations"])
        )

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=False, cancel_futures=True)


def auto_payload(depot: ObjectDepot | None, data: bytes, threshold: int | None = DEFAULT_THRESHOLD) -> Payload:
    """Inline small byte strings; proxy anything at or above ``threshold``."""
    if depot is None or threshold is None or len(data) < threshold:
        return Inline(data)
    return Reference(depot.proxy(data))


def materialize(depot: ObjectDepot | None, payload: Payload) -> bytes:
    if isinstance(payload, Inline):
        return payload.data
    if depot is None:
        raise TransportFailureError("reference payload received without an object depot")
    return depot.resolve(payload.ref)


_UNSET: Any = object()


class Proxy:
    """Lazily resolved reference to out-of-band bytes.

    Pickling a proxy, resolved or not, emits only its reference, so passing
    it to another agent never copies the data.
    """

    __slots__ = ("_ref", "_depot", "_value", "_lock")

    def __init__(self, ref: ProxyRef, depot: ObjectDepot | None = None) -> None:
        self._ref = ref
        self._depot = depot
        self._value: Any = _UNSET
        self._lock = threading.Lock()

    @property
    def ref(self) -> ProxyRef:
        return self._ref

    @property
    def resolved(self) -> bool:
        return self._value is not _UNSET

    def _bound_depot(self) -> ObjectDepot:
        if self._depot is None:
            from agentry.context import current_depot

            self._depot = current_depot()
        if self._depot is None:
            raise TransportFailureError("no object depot available to resolve proxy")
        return self._depot

    def resolve(self) -> bytes:
        if self._value is _UNSET:
            with self._lock:
                if self._value is _UNSET:
                    self._value = self._bound_depot().resolve(self._ref)
        return self._value

    def resolve_async(self) -> Future[bytes]:
        if self._value is not _UNSET:
            done: Future[bytes] = Future()
            done.set_result(self._value)
            return done
        fut = self._bound_depot().resolve_async(self._ref)

        def keep(f: Future[bytes]) -> None:
            if f.exception() is None:
                self._value = f.result()

        fut.add_done_callback(keep)
        return fut

    def __bytes__(self) -> bytes:
        return self.resolve()

    def __len__(self) -> int:
        return self._ref.size

    def __getitem__(self, item: Any) -> Any:
        return self.resolve()[item]

    def __iter__(self) -> Any:
        return iter(self.resolve())

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Proxy):
            return self._ref.object_id == other._ref.object_id or self.resolve() == other.resolve()
        return self.resolve() == other

    def __hash__(self) -> int:
        return hash(self._ref.object_id)

    def __getattr__(self, name: str) -> Any:
        return getattr(self.resolve(), name)

    def __repr__(self) -> str:
        return f"Proxy(object_id={self._ref.object_id.hex}, size={self._ref.size})"

    def __reduce__(self) -> Any:
        return (Proxy, (self._ref,))


class _Pickler(pickle.Pickler):
    def __init__(self, file: io.BytesIO, depot: ObjectDepot | None, threshold: int | None) -> None:
        super().__init__(file, protocol=pickle.HIGHEST_PROTOCOL)
        self.depot = depot
        self.threshold = threshold

    def persistent_id(self, obj: Any) -> Any:
        if type(obj) is Proxy:
            return codec.encode_proxyref(obj.ref)
        if (
            self.threshold is not None
            and self.depot is not None
            and type(obj) in (bytes, bytearray)
            and len(obj) >= self.threshold
        ):
            return codec.encode_proxyref(self.depot.proxy(obj))
        return None


class _Unpickler(pickle.Unpickler):
    def __init__(self, file: io.BytesIO, depot: ObjectDepot | None) -> None:
        super().__init__(file)
        self.depot = depot

    def persistent_load(self, pid: Any) -> Any:
        return Proxy(codec.decode_proxyref(pid), self.depot)


class ValueCodec:
    """Serializes action arguments and results.

    Byte strings at or above ``threshold`` are replaced by references when a
    depot is available; ``threshold=None`` disables pass-by-reference.
    """

    def __init__(self, depot: ObjectDepot | None = None, threshold: int | None = DEFAULT_THRESHOLD) -> None:
        self.depot = depot
        self.threshold = threshold

    def dumps(self, value: Any) -> bytes:
        buf = io.BytesIO()
        _Pickler(buf, self.depot, self.threshold).dump(value)
        return buf.getvalue()

    def loads(self, data: bytes) -> Any:
        return _Unpickler(io.BytesIO(data), self.depot).load()

    def to_payload(self, value: Any) -> Payload:
        return auto_payload(self.depot, self.dumps(value), self.threshold)

    def from_payload(self, payload: Payload) -> Any:
        return self.loads(materialize(self.depot, payload))
