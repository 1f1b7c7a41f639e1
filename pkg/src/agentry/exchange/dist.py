"""Distributed exchange: direct sockets preferred, relay store as fallback.

Each entity may run a :class:`~agentry.exchange.direct.DirectServer` and
advertise its address in the relay store. Senders try a cached direct route
first, then look the destination up, and relay through the store's pending
queue when no direct path works. Route cache entries are only hints; a
failed direct attempt falls back to the relay within the same send.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Any

from agentry import codec
from agentry.behavior import BehaviorSpec
from agentry.dataplane import ObjectDepot
from agentry.errors import (
    AgentryTimeoutError,
    MailboxClosedError,
    TransportFailureError,
    UnknownEntityError,
)
from agentry.exchange import direct
from agentry.exchange.base import Exchange, ExchangeClient
from agentry.ids import EntityId, Role
from agentry.messages import Envelope, PeerLocation
from agentry.relay.client import StoreClient, StoreError

logger = logging.getLogger(__name__)

DEDUP_WINDOW = 4096
REPROBE_SECONDS = 10.0
# A peer that had no endpoint at LOCATE time may advertise one shortly.
UNADVERTISED_SECONDS = 1.0
POLL_WAIT_SECONDS = 1.0
POLL_BATCH = 64


@dataclass
class Route:
    endpoint: PeerLocation | None
    verified_at: float
    # Relay routes are looked up again after this monotonic time.
    retry_at: float = 0.0

    @property
    def direct(self) -> bool:
        return self.endpoint is not None


class _Dedup:
    """Remembers the last ``size`` message ids seen from each sender."""

    def __init__(self, size: int = DEDUP_WINDOW) -> None:
        self.size = size
        self._seen: dict[EntityId, OrderedDict[Any, None]] = {}

    def first_time(self, src: EntityId, message_id: Any) -> bool:
        seen = self._seen.setdefault(src, OrderedDict())
        if message_id in seen:
            return False
        seen[message_id] = None
        if len(seen) > self.size:
            seen.popitem(last=False)
        return True


class DistExchange(Exchange):
    """Factory for distributed mailboxes hosted by a relay store.

    ``direct_listen=False`` makes entities relay-only, as if behind NAT.
    ``force_relay=True`` makes senders skip direct delivery; the direct
    endpoint is still used to serve pass-by-reference objects.
    """

    def __init__(
        self,
        store: str | tuple[str, int] | StoreClient,
        *,
        direct_listen: bool = True,
        force_relay: bool = False,
        host: str = "127.0.0.1",
        store_fallback: bool = False,
    ) -> None:
        if isinstance(store, StoreClient):
            self.store = store
        elif isinstance(store, tuple):
            self.store = StoreClient(*store)
        else:
            self.store = StoreClient.from_endpoint(store)
        self.direct_listen = direct_listen
        self.force_relay = force_relay
        self.host = host
        self.store_fallback = store_fallback
        self._peers = direct.PeerPool()

    @property
    def store_endpoint(self) -> str:
        return self.store.endpoint

    def register(self, role: Role, spec: BehaviorSpec | None = None) -> EntityId:
        while True:
            entity = EntityId.new(role)
            if self.store.register(entity, spec):
                return entity

    def connect(self, entity_id: EntityId, **overrides: Any) -> DistClient:
        opts = {
            "direct_listen": self.direct_listen,
            "force_relay": self.force_relay,
            "host": self.host,
            "store_fallback": self.store_fallback,
        }
        opts.update(overrides)
        return DistClient(self, entity_id, **opts)

    def close(self, entity_id: EntityId) -> None:
        try:
            endpoint = self.store.locate(entity_id)
        except MailboxClosedError:
            return
        self.store.close_mailbox(entity_id)
        if endpoint is not None:
            try:
                self._peers.request(endpoint, direct.close_notify(entity_id))
            except OSError:
                pass

    def discover(self, behavior_name: str) -> list[EntityId]:
        return self.store.discover(behavior_name)

    def shutdown(self) -> None:
        self._peers.close()
        self.store.close()


def connect(
    store: str | tuple[str, int] | StoreClient,
    role: Role = Role.CLIENT,
    spec: BehaviorSpec | None = None,
    *,
    direct_listen: bool = True,
    entity_id: EntityId | None = None,
    **kwargs: Any,
) -> DistClient:
    """Register (or reattach to ``entity_id``) and bring a mailbox online."""
    ex = DistExchange(store, direct_listen=direct_listen, **kwargs)
    if entity_id is None:
        entity_id = ex.register(role, spec)
    else:
        ex.store.register(entity_id, spec)
    client = ex.connect(entity_id)
    client.owns_exchange = True
    return client


class DistClient(ExchangeClient):
    """One entity's online presence in a :class:`DistExchange`."""

    def __init__(
        self,
        exchange: DistExchange,
        entity_id: EntityId,
        *,
        direct_listen: bool = True,
        force_relay: bool = False,
        host: str = "127.0.0.1",
        store_fallback: bool = False,
    ) -> None:
        self.exchange = exchange
        self.entity_id = entity_id
        self.store = exchange.store
        self.force_relay = force_relay
        self.owns_exchange = False
        self.peers = direct.PeerPool()
        self.routes: dict[EntityId, Route] = {}
        self.counters = {"direct": 0, "relay": 0, "locate": 0, "direct_failures": 0}
        self._inbox: deque[Envelope] = deque()
        self._cond = threading.Condition(threading.Lock())
        self._dedup = _Dedup()
        self._closed = False
        self._running = True
        self._routes_lock = threading.Lock()

        # Raises for unknown ids; a mailbox closed while we were away is
        # still drained by the poller before recv reports closure.
        try:
            self.store.locate(entity_id)
        except MailboxClosedError:
            pass

        self.server: direct.DirectServer | None = None
        endpoint = None
        if direct_listen:
            self.server = direct.DirectServer(
                deliver=self._on_direct,
                fetch=self._serve_object,
                on_close=self._on_close_notify,
                host=host,
            ).start()
            endpoint = self.server.endpoint
        self.depot = ObjectDepot(
            entity_id,
            endpoint=endpoint,
            store=self.store,
            peers=self.peers,
            store_fallback=store_fallback,
        )
        # The endpoint is advertised by the poller once the relay backlog is
        # drained, so direct messages never overtake older relayed ones.
        self._unadvertised = endpoint
        # Set once direct senders can find this entity (or never will).
        self.advertised = threading.Event()
        if endpoint is None:
            self.advertised.set()
        self._poll_store = StoreClient(self.store.host, self.store.port)
        self._poller = threading.Thread(
            target=self._poll_loop, name=f"relay-poll-{entity_id}", daemon=True
        )
        self._poller.start()

    @property
    def endpoint(self) -> PeerLocation | None:
        return self.server.endpoint if self.server is not None else None

    def __repr__(self) -> str:
        return f"DistClient({self.entity_id}, endpoint={self.endpoint})"

    # -- receive side ---------------------------------------------------------

    def _accept(self, body: bytes) -> int:
        try:
            env = codec.decode_body(body)
        except codec.DecodeError as exc:
            logger.warning("dropping malformed envelope for %s: %s", self.entity_id, exc)
            return direct.ACK_ERROR
        if env.dest != self.entity_id:
            return direct.ACK_WRONG_DEST
        with self._cond:
            if self._closed:
                return direct.ACK_CLOSED
            if self._dedup.first_time(env.src, env.message_id):
                self._inbox.append(env)
                self._cond.notify()
        return direct.ACK_DELIVERED

    def _on_direct(self, body: bytes) -> int:
        if not self._running:
            return direct.ACK_WRONG_DEST
        return self._accept(body)

    def _serve_object(self, object_id: Any) -> bytes | None:
        return self.depot.serve(object_id) if self.depot is not None else None

    def _on_close_notify(self, entity: EntityId) -> int:
        if entity != self.entity_id:
            return direct.ACK_WRONG_DEST
        self._mark_closed()
        return direct.ACK_DELIVERED

    def _mark_closed(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def _poll_loop(self) -> None:
        last_prune = time.monotonic()
        while self._running:
            with self._cond:
                # Prefetch only when the consumer has caught up, so little
                # sits in memory if this process dies.
                while self._inbox and self._running:
                    self._cond.wait(0.5)
            if not self._running:
                return
            wait = POLL_WAIT_SECONDS if self._unadvertised is None else 0.0
            try:
                batch = self._poll_store.poll(self.entity_id, POLL_BATCH, wait)
            except MailboxClosedError:
                self._mark_closed()
                return
            except (StoreError, UnknownEntityError) as exc:
                if self._running:
                    logger.debug("relay poll failed for %s: %s", self.entity_id, exc)
                    time.sleep(0.2)
                continue
            if batch and not self._running:
                self._requeue(batch)
                return
            for body in batch:
                self._accept_relayed(body)
            if not batch and self._unadvertised is not None:
                self._advertise()
            if time.monotonic() - last_prune > 10:
                self.peers.prune_idle()
                last_prune = time.monotonic()

    def _advertise(self) -> None:
        endpoint, self._unadvertised = self._unadvertised, None
        try:
            self._poll_store.advertise(self.entity_id, endpoint)
        except MailboxClosedError:
            pass
        except (StoreError, UnknownEntityError) as exc:
            logger.warning("could not advertise %s: %s", self.entity_id, exc)
        self.advertised.set()

    def _accept_relayed(self, body: bytes) -> None:
        try:
            env = codec.decode_body(body)
        except codec.DecodeError as exc:
            logger.warning("dropping malformed relayed envelope: %s", exc)
            return
        with self._cond:
            if self._dedup.first_time(env.src, env.message_id):
                self._inbox.append(env)
                self._cond.notify()

    def recv(self, timeout: float | None = None) -> Envelope:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while not self._inbox:
                if self._closed and not self._poller.is_alive():
                    raise MailboxClosedError(f"mailbox {self.entity_id} is closed")
                if deadline is None:
                    self._cond.wait(0.5)
                    continue
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise AgentryTimeoutError(f"no message for {self.entity_id} within {timeout}s")
                self._cond.wait(min(remaining, 0.5))
            env = self._inbox.popleft()
            if not self._inbox:
                self._cond.notify_all()
            return env

    # -- send side ------------------------------------------------------------

    def _try_direct(self, endpoint: PeerLocation, body: bytes) -> int | None:
        try:
            status = direct.parse_ack(self.peers.request(endpoint, body))
        except OSError:
            self.counters["direct_failures"] += 1
            return None
        return status

    def send(self, envelope: Envelope) -> None:
        body = codec.encode_body(envelope)
        dest = envelope.dest
        if not self.force_relay:
            with self._routes_lock:
                route = self.routes.get(dest)
            now = time.monotonic()
            if route is None or (not route.direct and now >= route.retry_at):
                self.counters["locate"] += 1
                try:
                    endpoint = self.store.locate(dest)
                except StoreError as exc:
                    raise TransportFailureError(str(exc)) from exc
                route = Route(endpoint, now, now + UNADVERTISED_SECONDS)
                with self._routes_lock:
                    self.routes[dest] = route
            if route.endpoint is not None:
                status = self._try_direct(route.endpoint, body)
                if status == direct.ACK_DELIVERED:
                    self.counters["direct"] += 1
                    route.verified_at = time.monotonic()
                    return
                if status == direct.ACK_CLOSED:
                    raise MailboxClosedError(f"mailbox {dest} is closed")
                now = time.monotonic()
                with self._routes_lock:
                    self.routes[dest] = Route(None, now, now + REPROBE_SECONDS)
        try:
            self.store.put_msg(dest, body)
        except StoreError as exc:
            raise TransportFailureError(f"direct and relay delivery to {dest} failed: {exc}") from exc
        self.counters["relay"] += 1

    # -- lifecycle ------------------------------------------------------------

    def _requeue(self, bodies: list[bytes]) -> None:
        for body in reversed(bodies):
            try:
                self.store.put_msg(self.entity_id, body, front=True)
            except (MailboxClosedError, StoreError, UnknownEntityError):
                logger.warning("could not requeue message for %s", self.entity_id)

    def close(self) -> None:
        """Close the mailbox; already queued messages remain receivable."""
        self.store.close_mailbox(self.entity_id)
        self._mark_closed()
        if self.server is not None:
            self.server.stop()

    def disconnect(self) -> None:
        """Stop listening. Undelivered messages go back to the relay queue."""
        if not self._running:
            return
        if self.server is not None:
            self.server.stop()
        with self._cond:
            self._running = False
            self._cond.notify_all()
        self._poller.join(timeout=POLL_WAIT_SECONDS + 5)
        if not self._closed:
            try:
                self.store.advertise(self.entity_id, None)
            except (MailboxClosedError, StoreError, UnknownEntityError):
                pass
        with self._cond:
            leftover = [codec.encode_body(e) for e in self._inbox]
            self._inbox.clear()
        if leftover:
            self._requeue(leftover)
        self._poll_store.close()
        self.peers.close()
        if self.depot is not None:
            self.depot.close()
        if self.owns_exchange:
            self.exchange.shutdown()

    @property
    def closed(self) -> bool:
        return self._closed
