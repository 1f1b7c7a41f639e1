"""Direct peer sockets: envelope delivery and object fetch between processes.

Every request on a direct connection gets exactly one reply frame, so a
sender knows whether the peer accepted an envelope before it considers the
message delivered. Frame bodies start with the protocol version and a kind
byte; kinds 1-5 are envelopes (see :mod:`agentry.codec`), the rest are
control frames defined here.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
import uuid
from typing import Callable

from agentry import codec
from agentry.ids import EntityId
from agentry.messages import PeerLocation

logger = logging.getLogger(__name__)

KIND_FETCH = 0x20
KIND_FETCH_REPLY = 0x21
KIND_ACK = 0x30
KIND_CLOSE_NOTIFY = 0x32

ACK_DELIVERED = 0
ACK_CLOSED = 1
ACK_WRONG_DEST = 2
ACK_ERROR = 3

FETCH_FOUND = 0
FETCH_MISSING = 1

IDLE_CLOSE_SECONDS = 60.0

_HDR = bytes((codec.VERSION,))


def ack_body(status: int) -> bytes:
    return bytes((codec.VERSION, KIND_ACK, status))


def fetch_request(object_id: uuid.UUID) -> bytes:
    return bytes((codec.VERSION, KIND_FETCH)) + codec.pack_fields(object_id.bytes)


def close_notify(entity: EntityId) -> bytes:
    return bytes((codec.VERSION, KIND_CLOSE_NOTIFY)) + codec.pack_fields(entity.to_bytes())


def parse_ack(body: bytes) -> int:
    if len(body) != 3 or body[0] != codec.VERSION or body[1] != KIND_ACK:
        raise ConnectionError("malformed ack from peer")
    return body[2]


def _tune(sock: socket.socket) -> None:
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)


class DirectServer:
    """Accepts peer connections for one entity.

    ``deliver`` receives each envelope body and returns an ACK status;
    ``fetch`` returns object bytes or None; ``on_close`` is told when a peer
    reports that this entity's mailbox was closed elsewhere.
    """

    def __init__(
        self,
        deliver: Callable[[bytes], int],
        fetch: Callable[[uuid.UUID], bytes | None] | None = None,
        on_close: Callable[[EntityId], int] | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
    ) -> None:
        self._deliver = deliver
        self._fetch = fetch
        self._on_close = on_close
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(128)
        self._stopped = threading.Event()
        self._conns: set[socket.socket] = set()
        self._lock = threading.Lock()
        self._thread: threading.Thread | None = None
        addr = self._sock.getsockname()
        self.endpoint = PeerLocation(addr[0], addr[1])

    def start(self) -> DirectServer:
        self._thread = threading.Thread(
            target=self._accept_loop, name=f"direct-accept-{self.endpoint.port}", daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._stopped.is_set():
            return
        self._stopped.set()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        with self._lock:
            conns = list(self._conns)
            self._conns.clear()
        for c in conns:
            try:
                c.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            c.close()
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join(timeout=2)

    def _accept_loop(self) -> None:
        while not self._stopped.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            _tune(conn)
            with self._lock:
                if self._stopped.is_set():
                    conn.close()
                    return
                self._conns.add(conn)
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()

    def _serve(self, conn: socket.socket) -> None:
        try:
            while not self._stopped.is_set():
                body = codec.recv_frame(conn)
                if body is None:
                    return
                codec.send_frame(conn, self._handle(body))
        except OSError:
            pass
        finally:
            with self._lock:
                self._conns.discard(conn)
            conn.close()

    def _handle(self, body: bytes) -> bytes:
        if len(body) < 2 or body[0] != codec.VERSION:
            return ack_body(ACK_ERROR)
        kind = body[1]
        if 1 <= kind <= 5:
            return ack_body(self._deliver(body))
        if kind == KIND_FETCH and self._fetch is not None:
            try:
                r = codec.Reader(body[2:])
                object_id = uuid.UUID(bytes=r.field("object id"))
                r.end()
            except (codec.DecodeError, ValueError):
                return ack_body(ACK_ERROR)
            data = self._fetch(object_id)
            if data is None:
                return bytes((codec.VERSION, KIND_FETCH_REPLY, FETCH_MISSING))
            return bytes((codec.VERSION, KIND_FETCH_REPLY, FETCH_FOUND)) + data
        if kind == KIND_CLOSE_NOTIFY and self._on_close is not None:
            try:
                r = codec.Reader(body[2:])
                entity = EntityId.from_bytes(r.field("entity"))
                r.end()
            except (codec.DecodeError, ValueError):
                return ack_body(ACK_ERROR)
            return ack_body(self._on_close(entity))
        return ack_body(ACK_ERROR)


class _PeerConn:
    __slots__ = ("sock", "lock", "last_used")

    def __init__(self, sock: socket.socket) -> None:
        self.sock = sock
        self.lock = threading.Lock()
        self.last_used = time.monotonic()


class PeerPool:
    """At most one persistent outbound connection per peer endpoint."""

    def __init__(self, connect_timeout: float = 2.0, io_timeout: float | None = 30.0) -> None:
        self._conns: dict[PeerLocation, _PeerConn] = {}
        self._lock = threading.Lock()
        self.connect_timeout = connect_timeout
        self.io_timeout = io_timeout
        self.connects = 0

    def _get(self, endpoint: PeerLocation) -> _PeerConn:
        with self._lock:
            pc = self._conns.get(endpoint)
            if pc is not None:
                return pc
        sock = socket.create_connection(
            (endpoint.host, endpoint.port), timeout=self.connect_timeout
        )
        _tune(sock)
        sock.settimeout(self.io_timeout)
        pc = _PeerConn(sock)
        with self._lock:
            existing = self._conns.get(endpoint)
            if existing is not None:
                sock.close()
                return existing
            self._conns[endpoint] = pc
            self.connects += 1
        return pc

    def _drop(self, endpoint: PeerLocation, pc: _PeerConn) -> None:
        with self._lock:
            if self._conns.get(endpoint) is pc:
                del self._conns[endpoint]
        try:
            pc.sock.close()
        except OSError:
            pass

    def request(self, endpoint: PeerLocation, body: bytes) -> bytes:
        """Send one frame and wait for the reply; raises OSError on failure."""
        pc = self._get(endpoint)
        with pc.lock:
            try:
                codec.send_frame(pc.sock, body)
                reply = codec.recv_frame(pc.sock)
            except OSError:
                self._drop(endpoint, pc)
                raise
            if reply is None:
                self._drop(endpoint, pc)
                raise ConnectionError(f"peer {endpoint} closed the connection")
            pc.last_used = time.monotonic()
            return reply

    def fetch(self, endpoint: PeerLocation, object_id: uuid.UUID) -> bytes | None:
        reply = self.request(endpoint, fetch_request(object_id))
        if len(reply) < 3 or reply[1] != KIND_FETCH_REPLY:
            raise ConnectionError("malformed fetch reply")
        if reply[2] == FETCH_MISSING:
            return None
        return reply[3:]

    def prune_idle(self, max_idle: float = IDLE_CLOSE_SECONDS) -> None:
        now = time.monotonic()
        with self._lock:
            stale = [(e, pc) for e, pc in self._conns.items() if now - pc.last_used > max_idle]
        for endpoint, pc in stale:
            if pc.lock.acquire(blocking=False):
                try:
                    self._drop(endpoint, pc)
                finally:
                    pc.lock.release()

    def close(self) -> None:
        with self._lock:
            conns = list(self._conns.values())
            self._conns.clear()
        for pc in conns:
            try:
                pc.sock.close()
            except OSError:
                pass
