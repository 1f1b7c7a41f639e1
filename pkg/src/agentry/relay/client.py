"""Blocking client for the relay store protocol."""

from __future__ import annotations

import json
import socket
import threading
from typing import Any

from agentry import codec
from agentry.behavior import BehaviorSpec
from agentry.errors import MailboxClosedError, TransportFailureError, UnknownEntityError
from agentry.ids import EntityId
from agentry.messages import PeerLocation
from agentry.relay.protocol import PUT_FRONT, Op, Status, request, split, u32


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        raise ValueError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


class StoreError(TransportFailureError):
    pass


class StoreClient:
    """Thread-safe store client backed by a small pool of connections.

    Each request borrows a connection for its full round trip, so a long
    poll never blocks unrelated requests.
    """

    def __init__(self, host: str, port: int, *, timeout: float = 60.0) -> None:
        self.host = host
        self.port = port
        self.timeout = timeout
        self._idle: list[socket.socket] = []
        self._lock = threading.Lock()
        self._closed = False

    @classmethod
    def from_endpoint(cls, endpoint: str, **kwargs: Any) -> StoreClient:
        host, port = parse_endpoint(endpoint)
        return cls(host, port, **kwargs)

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def _acquire(self) -> socket.socket:
        with self._lock:
            if self._closed:
                raise StoreError("store client closed")
            if self._idle:
                return self._idle.pop()
        try:
            sock = socket.create_connection((self.host, self.port), timeout=5.0)
        except OSError as exc:
            raise StoreError(f"cannot reach relay store at {self.endpoint}: {exc}") from exc
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.settimeout(self.timeout)
        return sock

    def _release(self, sock: socket.socket) -> None:
        with self._lock:
            if not self._closed and len(self._idle) < 8:
                self._idle.append(sock)
                return
        sock.close()

    def call(self, op: Op, *fields: bytes) -> tuple[Status, list[bytes]]:
        sock = self._acquire()
        try:
            codec.send_frame(sock, request(op, *fields))
            body = codec.recv_frame(sock)
        except OSError as exc:
            sock.close()
            raise StoreError(f"relay store request {op.name} failed: {exc}") from exc
        if body is None:
            sock.close()
            raise StoreError(f"relay store closed the connection during {op.name}")
        self._release(sock)
        code, out = split(body, "status")
        status = Status(code)
        if status is Status.ERROR:
            raise StoreError(out[0].decode() if out else "store error")
        return status, out

    def close(self) -> None:
        with self._lock:
            self._closed = True
            idle, self._idle = self._idle, []
        for sock in idle:
            sock.close()

    # -- operations -----------------------------------------------------------

    def register(self, entity: EntityId, spec: BehaviorSpec | None = None) -> bool:
        """Return True for a fresh registration, False if the id exists."""
        status, _ = self.call(Op.REGISTER, entity.to_bytes(), spec.to_json() if spec else b"")
        return status is Status.OK

    def advertise(self, entity: EntityId, endpoint: PeerLocation | None) -> None:
        status, _ = self.call(Op.ADVERTISE, entity.to_bytes(), str(endpoint or "").encode())
        self._check(status, entity)

    def locate(self, entity: EntityId) -> PeerLocation | None:
        status, out = self.call(Op.LOCATE, entity.to_bytes())
        self._check(status, entity)
        if not out or not out[0]:
            return None
        host, port = parse_endpoint(out[0].decode())
        return PeerLocation(host, port)

    def put_msg(self, dest: EntityId, body: bytes, *, front: bool = False) -> None:
        flags = bytes((PUT_FRONT if front else 0,))
        status, _ = self.call(Op.PUT_MSG, dest.to_bytes(), body, flags)
        self._check(status, dest)

    def poll(self, entity: EntityId, max_msgs: int = 64, wait: float = 0.0) -> list[bytes]:
        status, out = self.call(
            Op.POLL_MSGS, entity.to_bytes(), u32(max_msgs), u32(int(wait * 1000))
        )
        self._check(status, entity)
        return out

    def close_mailbox(self, entity: EntityId) -> None:
        status, _ = self.call(Op.CLOSE, entity.to_bytes())
        self._check(status, entity)

    def discover(self, name: str) -> list[EntityId]:
        _, out = self.call(Op.DISCOVER, name.encode())
        return [EntityId.from_bytes(raw) for raw in out]

    def obj_put(self, key: str, data: bytes, ttl: float | None = None) -> None:
        self.call(Op.OBJ_PUT, key.encode(), data, u32(int(ttl * 1000)) if ttl else b"")

    def obj_get(self, key: str) -> bytes | None:
        status, out = self.call(Op.OBJ_GET, key.encode())
        return out[0] if status is Status.OK else None

    def obj_del(self, key: str) -> bool:
        status, _ = self.call(Op.OBJ_DEL, key.encode())
        return status is Status.OK

    def stats(self) -> dict[str, Any]:
        _, out = self.call(Op.STATS)
        return json.loads(out[0])

    @staticmethod
    def _check(status: Status, entity: EntityId) -> None:
        if status is Status.CLOSED:
            raise MailboxClosedError(f"mailbox {entity} is closed")
        if status is Status.NOT_FOUND:
            raise UnknownEntityError(f"unknown entity {entity}")
