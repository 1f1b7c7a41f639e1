"""Relay store server: entity registry, pending-message queues, endpoint
directory, discovery index and object store behind one TCP port."""

from __future__ import annotations

import collections
import json
import logging
import os
import select
import socket
import socketserver
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from agentry import codec
from agentry.behavior import BehaviorSpec
from agentry.ids import EntityId
from agentry.relay.persistence import PersistedEntity, StoreLog
from agentry.relay.protocol import (
    MAX_WAIT_SECONDS,
    PUT_FRONT,
    Op,
    Status,
    read_u32,
    reply,
    split,
)

logger = logging.getLogger(__name__)


@dataclass
class StoreRecord:
    entity: EntityId
    spec: BehaviorSpec | None = None
    spec_raw: bytes = b""
    endpoint: str | None = None
    closed: bool = False
    pending: deque[bytes] = field(default_factory=deque)
    cond: threading.Condition | None = None


@dataclass
class StoredObject:
    key: str
    data: bytes
    expires: float | None = None


class RelayState:
    """Store state guarded by one lock; every op is linearizable."""

    def __init__(self, log: StoreLog | None = None) -> None:
        self._lock = threading.Lock()
        self.records: dict[EntityId, StoreRecord] = {}
        self.objects: dict[str, StoredObject] = {}
        self.op_counts: collections.Counter[str] = collections.Counter()
        self.bytes_in: collections.Counter[str] = collections.Counter()
        self.bytes_out: collections.Counter[str] = collections.Counter()
        self.log = log
        self.stopped = False
        if log is not None:
            for rec in log.load().values():
                self._restore(rec)
            log.snapshot(self._persisted())
            log.open()

    def _restore(self, p: PersistedEntity) -> None:
        spec = BehaviorSpec.from_json(p.spec) if p.spec else None
        self.records[p.entity] = StoreRecord(
            p.entity, spec, p.spec, None, p.closed, p.pending, threading.Condition(self._lock)
        )

    def _persisted(self) -> dict[EntityId, PersistedEntity]:
        return {
            e: PersistedEntity(e, r.spec_raw, r.closed, r.pending) for e, r in self.records.items()
        }

    def _maybe_snapshot(self) -> None:
        if self.log is not None and self.log.needs_snapshot():
            self.log.snapshot(self._persisted())

    # each method returns (status, fields)

    def register(self, entity: EntityId, spec_raw: bytes) -> tuple[Status, list[bytes]]:
        spec = BehaviorSpec.from_json(spec_raw) if spec_raw else None
        with self._lock:
            if entity in self.records:
                return Status.EXISTS, []
            self.records[entity] = StoreRecord(
                entity, spec, spec_raw, cond=threading.Condition(self._lock)
            )
            if self.log is not None:
                self.log.register(entity, spec_raw)
                self._maybe_snapshot()
        return Status.OK, []

    def advertise(self, entity: EntityId, endpoint: str) -> tuple[Status, list[bytes]]:
        with self._lock:
            rec = self.records.get(entity)
            if rec is None:
                return Status.NOT_FOUND, []
            if rec.closed:
                return Status.CLOSED, []
            rec.endpoint = endpoint or None
        return Status.OK, []

    def locate(self, entity: EntityId) -> tuple[Status, list[bytes]]:
        with self._lock:
            rec = self.records.get(entity)
            if rec is None:
                return Status.NOT_FOUND, []
            if rec.closed:
                return Status.CLOSED, []
            return Status.OK, [(rec.endpoint or "").encode()]

    def put_msg(self, dest: EntityId, msg: bytes, front: bool) -> tuple[Status, list[bytes]]:
        with self._lock:
            rec = self.records.get(dest)
            if rec is None:
                return Status.NOT_FOUND, []
            # A closed queue still drains, so its owner may push undelivered
            # messages back to the front; ordinary sends are refused.
            if rec.closed and not front:
                return Status.CLOSED, []
            if front:
                rec.pending.appendleft(msg)
            else:
                rec.pending.append(msg)
            if self.log is not None:
                self.log.put(dest, msg, front)
                self._maybe_snapshot()
            assert rec.cond is not None
            rec.cond.notify_all()
        return Status.OK, []

    def poll(
        self,
        entity: EntityId,
        limit: int,
        wait: float,
        alive: Callable[[], bool] | None = None,
    ) -> tuple[Status, list[bytes]]:
        """Pop up to ``limit`` messages, waiting up to ``wait`` seconds.

        ``alive`` is checked before messages are handed out, so a poller
        whose process died while parked here does not swallow them.
        """
        deadline = time.monotonic() + min(wait, MAX_WAIT_SECONDS)
        with self._lock:
            rec = self.records.get(entity)
            if rec is None:
                return Status.NOT_FOUND, []
            assert rec.cond is not None
            while not rec.pending and not rec.closed:
                if self.stopped:
                    return Status.ERROR, [b"store shutting down"]
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return Status.OK, []
                rec.cond.wait(remaining)
            if not rec.pending:
                return Status.CLOSED, []
            if alive is not None and not alive():
                return Status.ERROR, [b"poller went away"]
            n = min(max(limit, 1), len(rec.pending))
            out = [rec.pending.popleft() for _ in range(n)]
            if self.log is not None:
                self.log.pop(entity, n)
                self._maybe_snapshot()
        return Status.OK, out

    def close(self, entity: EntityId) -> tuple[Status, list[bytes]]:
        with self._lock:
            rec = self.records.get(entity)
            if rec is None:
                return Status.NOT_FOUND, []
            if not rec.closed:
                rec.closed = True
                rec.endpoint = None
                if self.log is not None:
                    self.log.close_entity(entity)
            assert rec.cond is not None
            rec.cond.notify_all()
        return Status.OK, []

    def discover(self, name: str) -> tuple[Status, list[bytes]]:
        with self._lock:
            found = [
                r.entity
                for r in self.records.values()
                if r.spec is not None and not r.closed and r.entity.is_agent and r.spec.is_a(name)
            ]
        return Status.OK, [e.to_bytes() for e in sorted(found)]

    def obj_put(self, key: str, data: bytes, ttl: float | None) -> tuple[Status, list[bytes]]:
        expires = time.monotonic() + ttl if ttl else None
        with self._lock:
            self.objects[key] = StoredObject(key, data, expires)
        return Status.OK, []

    def obj_get(self, key: str) -> tuple[Status, list[bytes]]:
        with self._lock:
            obj = self.objects.get(key)
            if obj is None:
                return Status.NOT_FOUND, []
            if obj.expires is not None and obj.expires < time.monotonic():
                del self.objects[key]
                return Status.NOT_FOUND, []
            return Status.OK, [obj.data]

    def obj_del(self, key: str) -> tuple[Status, list[bytes]]:
        with self._lock:
            if self.objects.pop(key, None) is None:
                return Status.NOT_FOUND, []
        return Status.OK, []

    def stats(self) -> tuple[Status, list[bytes]]:
        with self._lock:
            data = {
                "ops": dict(self.op_counts),
                "bytes_in": dict(self.bytes_in),
                "bytes_out": dict(self.bytes_out),
                "entities": len(self.records),
                "objects": len(self.objects),
            }
        return Status.OK, [json.dumps(data).encode()]

    def count(self, op: str, n_in: int, n_out: int) -> None:
        with self._lock:
            self.op_counts[op] += 1
            self.bytes_in[op] += n_in
            self.bytes_out[op] += n_out

    def flush(self) -> None:
        with self._lock:
            if self.log is not None:
                self.log.flush()

    def shutdown(self) -> None:
        with self._lock:
            self.stopped = True
            if self.log is not None:
                self.log.snapshot(self._persisted())
                self.log.close()
                self.log = None
            for rec in self.records.values():
                assert rec.cond is not None
                rec.cond.notify_all()


def _entity(raw: bytes) -> EntityId:
    return EntityId.from_bytes(raw)


def peer_alive(sock: socket.socket) -> bool:
    """False if the peer has closed its end.

    Clients never send while waiting for a reply, so a readable socket
    during a long poll means EOF or a reset.
    """
    try:
        readable, _, _ = select.select([sock], [], [], 0)
        if not readable:
            return True
        return bool(sock.recv(1, socket.MSG_PEEK))
    except (OSError, ValueError):
        return False


def dispatch(
    state: RelayState, op: int, fields: list[bytes], alive: Callable[[], bool] | None = None
) -> tuple[Status, list[bytes]]:
    if op == Op.REGISTER:
        return state.register(_entity(fields[0]), fields[1] if len(fields) > 1 else b"")
    if op == Op.ADVERTISE:
        return state.advertise(_entity(fields[0]), fields[1].decode())
    if op == Op.LOCATE:
        return state.locate(_entity(fields[0]))
    if op == Op.PUT_MSG:
        front = len(fields) > 2 and bool(fields[2] and fields[2][0] & PUT_FRONT)
        return state.put_msg(_entity(fields[0]), fields[1], front)
    if op == Op.POLL_MSGS:
        return state.poll(_entity(fields[0]), read_u32(fields[1]), read_u32(fields[2]) / 1000, alive)
    if op == Op.CLOSE:
        return state.close(_entity(fields[0]))
    if op == Op.DISCOVER:
        return state.discover(fields[0].decode())
    if op == Op.OBJ_PUT:
        ttl = read_u32(fields[2]) / 1000 if len(fields) > 2 and fields[2] else None
        return state.obj_put(fields[0].decode(), fields[1], ttl)
    if op == Op.OBJ_GET:
        return state.obj_get(fields[0].decode())
    if op == Op.OBJ_DEL:
        return state.obj_del(fields[0].decode())
    if op == Op.STATS:
        return state.stats()
    return Status.ERROR, [f"unknown opcode {op}".encode()]


class _Handler(socketserver.BaseRequestHandler):
    server: RelayServer

    def handle(self) -> None:
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.server.track(sock, True)
        try:
            self._serve(sock)
        finally:
            self.server.track(sock, False)

    def _serve(self, sock: socket.socket) -> None:
        state = self.server.state
        delay = self.server.inject_latency
        while not self.server.stopping.is_set():
            try:
                body = codec.recv_frame(sock)
            except OSError:
                return
            if body is None:
                return
            if delay:
                time.sleep(delay)
            try:
                op, fields = split(body, "opcode")
                status, out = dispatch(state, op, fields, lambda: peer_alive(sock))
                name = Op(op).name if op in Op._value2member_map_ else str(op)
            except (codec.DecodeError, ValueError, IndexError, UnicodeDecodeError) as exc:
                status, out, name = Status.ERROR, [str(exc).encode()], "INVALID"
            payload = reply(status, *out)
            state.count(name, len(body), len(payload))
            try:
                codec.send_frame(sock, payload)
            except OSError:
                if name == "POLL_MSGS" and status is Status.OK and out:
                    entity = _entity(fields[0])
                    for msg in reversed(out):
                        state.put_msg(entity, msg, front=True)
                return


class RelayServer(socketserver.ThreadingTCPServer):
    """Threaded relay store; one session thread per client connection.

    With ``data_dir`` set, registry, specs and pending messages survive a
    restart. ``inject_latency`` delays every request on arrival, which adds
    that much to each store round trip.
    """

    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 256

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        data_dir: str | os.PathLike[str] | None = None,
        inject_latency_ms: float = 0.0,
    ) -> None:
        self.state = RelayState(StoreLog(data_dir) if data_dir is not None else None)
        self.inject_latency = inject_latency_ms / 1000.0
        self.stopping = threading.Event()
        self._thread: threading.Thread | None = None
        self._sessions: set[socket.socket] = set()
        self._sessions_lock = threading.Lock()
        super().__init__((host, port), _Handler)

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server_address[:2]
        return str(host), int(port)

    def start(self) -> RelayServer:
        self._thread = threading.Thread(
            target=self.serve_forever, kwargs={"poll_interval": 0.1}, name="relay-store", daemon=True
        )
        self._thread.start()
        self._flusher = threading.Thread(target=self._flush_loop, daemon=True)
        self._flusher.start()
        return self

    def _flush_loop(self) -> None:
        while not self.stopping.wait(0.5):
            self.state.flush()

    def track(self, sock: socket.socket, active: bool) -> None:
        with self._sessions_lock:
            if active:
                self._sessions.add(sock)
            else:
                self._sessions.discard(sock)

    def stop(self) -> None:
        self.stopping.set()
        self.shutdown()
        self.server_close()
        self.state.shutdown()
        with self._sessions_lock:
            sessions = list(self._sessions)
        for sock in sessions:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass

    def __enter__(self) -> RelayServer:
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()
