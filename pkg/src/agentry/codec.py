"""Binary framing shared by direct sockets and the relay store.

A frame is a 4-byte big-endian body length followed by the body. Envelope
bodies are::

    version(1) kind(1) src(17) dest(17) message_id(16) field*

where each entity id is 16 uuid bytes plus one role byte and each field is a
4-byte big-endian length followed by that many bytes. ``docs/protocol.md``
lists the fields per kind.
"""

from __future__ import annotations

import socket
import struct
import uuid

from agentry.errors import ErrorInfo, ErrorKind
from agentry.ids import EntityId, Role
from agentry.messages import (
    ActionRequest,
    ActionResponse,
    Envelope,
    Inline,
    Kind,
    Location,
    Payload,
    PeerLocation,
    Ping,
    PingResponse,
    ProxyRef,
    Reference,
    Shutdown,
    StoreLocation,
)

VERSION = 1
MAX_BODY = 2**32 - 1
MAX_REF_SIZE = 512

_U32 = struct.Struct(">I")
_U16 = struct.Struct(">H")
_U64 = struct.Struct(">Q")

_PAYLOAD_INLINE = b"\x00"
_PAYLOAD_REFERENCE = b"\x01"
_OUTCOME_OK = b"\x00"
_OUTCOME_ERR = b"\x01"
_LOC_PEER = 0
_LOC_STORE = 1


class EncodeError(ValueError):
    pass


class DecodeError(ValueError):
    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


def pack_field(data: bytes) -> bytes:
    if len(data) > MAX_BODY:
        raise EncodeError(f"field of {len(data)} bytes exceeds the frame limit")
    return _U32.pack(len(data)) + data


def pack_fields(*fields: bytes) -> bytes:
    return b"".join(_U32.pack(len(f)) + f for f in fields)


def frame(body: bytes) -> bytes:
    if len(body) > MAX_BODY:
        raise EncodeError(
            f"body of {len(body)} bytes exceeds 2**32-1; send a Reference payload"
        )
    return _U32.pack(len(body)) + body


class Reader:
    """Bounds-checked cursor over a frame body.

    Offsets in errors are relative to the start of the full frame, so the
    4-byte length prefix is included.
    """

    __slots__ = ("_buf", "_pos", "_base")

    def __init__(self, buf: bytes | memoryview, base: int = 0) -> None:
        self._buf = memoryview(buf)
        self._pos = 0
        self._base = base

    @property
    def offset(self) -> int:
        return self._base + self._pos

    def remaining(self) -> int:
        return len(self._buf) - self._pos

    def take(self, n: int, what: str = "field") -> bytes:
        if n > len(self._buf) - self._pos:
            raise DecodeError(f"truncated {what}", self.offset)
        out = self._buf[self._pos : self._pos + n].tobytes()
        self._pos += n
        return out

    def byte(self, what: str = "byte") -> int:
        return self.take(1, what)[0]

    def field(self, what: str = "field") -> bytes:
        start = self.offset
        if len(self._buf) - self._pos < 4:
            raise DecodeError(f"truncated {what} length", start)
        (n,) = _U32.unpack_from(self._buf, self._pos)
        self._pos += 4
        if n > len(self._buf) - self._pos:
            raise DecodeError(f"truncated {what}", start)
        return self.take(n, what)

    def entity(self, what: str = "entity id") -> EntityId:
        start = self.offset
        raw = self.take(17, what)
        try:
            return EntityId(uuid.UUID(bytes=raw[:16]), Role(raw[16]))
        except ValueError:
            raise DecodeError(f"invalid role in {what}", start + 16) from None

    def uid(self, what: str = "id") -> uuid.UUID:
        return uuid.UUID(bytes=self.take(16, what))

    def text(self, what: str = "text") -> str:
        start = self.offset
        raw = self.field(what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError(f"invalid utf-8 in {what}", start) from None

    def end(self) -> None:
        if self._pos != len(self._buf):
            raise DecodeError("trailing bytes", self.offset)


# -- ProxyRef -----------------------------------------------------------------


def encode_proxyref(ref: ProxyRef) -> bytes:
    if len(ref.checksum) != 32:
        raise EncodeError("checksum must be 32 bytes")
    parts = [
        ref.object_id.bytes,
        _U64.pack(ref.size),
        ref.origin.to_bytes(),
        ref.checksum,
        bytes((len(ref.locations),)),
    ]
    for loc in ref.locations:
        if isinstance(loc, PeerLocation):
            raw = f"{loc.host}:{loc.port}".encode()
            parts.append(bytes((_LOC_PEER,)) + _U16.pack(len(raw)) + raw)
        else:
            raw = loc.key.encode()
            parts.append(bytes((_LOC_STORE,)) + _U16.pack(len(raw)) + raw)
    out = b"".join(parts)
    if len(out) > MAX_REF_SIZE:
        raise EncodeError(f"encoded reference is {len(out)} bytes (limit 512)")
    return out


def decode_proxyref(raw: bytes, base: int = 0) -> ProxyRef:
    r = Reader(raw, base)
    object_id = r.uid("object id")
    (size,) = _U64.unpack(r.take(8, "object size"))
    origin = r.entity("origin")
    checksum = r.take(32, "checksum")
    count = r.byte("location count")
    locations: list[Location] = []
    for _ in range(count):
        start = r.offset
        tag = r.byte("location tag")
        (n,) = _U16.unpack(r.take(2, "location length"))
        try:
            text = r.take(n, "location").decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError("invalid utf-8 in location", start) from None
        if tag == _LOC_PEER:
            host, sep, port = text.rpartition(":")
            if not sep or not port.isdigit() or int(port) > 65535:
                raise DecodeError("invalid peer location", start)
            locations.append(PeerLocation(host, int(port)))
        elif tag == _LOC_STORE:
            locations.append(StoreLocation(text))
        else:
            raise DecodeError("unknown location tag", start)
    r.end()
    return ProxyRef(object_id, size, origin, checksum, tuple(locations))


# -- payloads -----------------------------------------------------------------


def _pack_payload(p: Payload) -> list[bytes]:
    if isinstance(p, Inline):
        return [_PAYLOAD_INLINE, bytes(p.data)]
    if isinstance(p, Reference):
        return [_PAYLOAD_REFERENCE, encode_proxyref(p.ref)]
    raise EncodeError(f"not a payload: {p!r}")


def _read_payload(r: Reader) -> Payload:
    start = r.offset
    tag = r.field("payload tag")
    data_start = r.offset + 4
    data = r.field("payload")
    if tag == _PAYLOAD_INLINE:
        return Inline(data)
    if tag == _PAYLOAD_REFERENCE:
        return Reference(decode_proxyref(data, data_start))
    raise DecodeError("unknown payload tag", start)


# -- envelopes ----------------------------------------------------------------


def _pack_body_fields(e: Envelope) -> list[bytes]:
    b = e.body
    if isinstance(b, ActionRequest):
        return [b.action.encode("utf-8"), *_pack_payload(b.payload)]
    if isinstance(b, ActionResponse):
        if b.error is not None:
            return [
                b.request_id.bytes,
                _OUTCOME_ERR,
                bytes((b.error.kind,)),
                b.error.detail.encode("utf-8"),
            ]
        assert b.result is not None
        return [b.request_id.bytes, _OUTCOME_OK, *_pack_payload(b.result)]
    if isinstance(b, Ping):
        return []
    if isinstance(b, PingResponse):
        return [b.request_id.bytes]
    if isinstance(b, Shutdown):
        return [b"\x01" if b.terminal else b"\x00"]
    raise EncodeError(f"unknown body type {type(b).__name__}")


def encode_body(e: Envelope) -> bytes:
    head = (
        bytes((VERSION, e.body.kind))
        + e.src.to_bytes()
        + e.dest.to_bytes()
        + e.message_id.bytes
    )
    return head + pack_fields(*_pack_body_fields(e))


def encode_envelope(e: Envelope) -> bytes:
    """Encode ``e`` as a complete frame, length prefix included."""
    return frame(encode_body(e))


def _fixed_field(r: Reader, n: int, what: str) -> bytes:
    start = r.offset
    raw = r.field(what)
    if len(raw) != n:
        raise DecodeError(f"{what} must be {n} bytes", start)
    return raw


def decode_body(body: bytes | memoryview, base: int = 4) -> Envelope:
    """Decode an envelope body (the frame without its length prefix)."""
    r = Reader(body, base)
    version = r.byte("version")
    if version != VERSION:
        raise DecodeError(f"unsupported version {version}", base)
    kind_start = r.offset
    kind_byte = r.byte("kind")
    try:
        kind = Kind(kind_byte)
    except ValueError:
        raise DecodeError(f"unknown kind {kind_byte}", kind_start) from None
    src = r.entity("src")
    dest = r.entity("dest")
    message_id = r.uid("message id")

    body_obj: ActionRequest | ActionResponse | Ping | PingResponse | Shutdown
    if kind is Kind.ACTION_REQUEST:
        action = r.text("action")
        body_obj = ActionRequest(action, _read_payload(r))
    elif kind is Kind.ACTION_RESPONSE:
        request_id = uuid.UUID(bytes=_fixed_field(r, 16, "request id"))
        start = r.offset
        outcome = r.field("outcome")
        if outcome == _OUTCOME_OK:
            body_obj = ActionResponse(request_id, result=_read_payload(r))
        elif outcome == _OUTCOME_ERR:
            kstart = r.offset
            kraw = _fixed_field(r, 1, "error kind")
            try:
                ekind = ErrorKind(kraw[0])
            except ValueError:
                raise DecodeError("unknown error kind", kstart) from None
            body_obj = ActionResponse(
                request_id, error=ErrorInfo(ekind, r.text("error detail"))
            )
        else:
            raise DecodeError("unknown outcome", start)
    elif kind is Kind.PING:
        body_obj = Ping()
    elif kind is Kind.PING_RESPONSE:
        body_obj = PingResponse(uuid.UUID(bytes=_fixed_field(r, 16, "request id")))
    else:
        start = r.offset
        flag = _fixed_field(r, 1, "terminal flag")
        if flag not in (b"\x00", b"\x01"):
            raise DecodeError("invalid terminal flag", start)
        body_obj = Shutdown(terminal=flag == b"\x01")
    r.end()
    return Envelope(src=src, dest=dest, body=body_obj, message_id=message_id)


def decode_envelope(data: bytes | memoryview) -> Envelope:
    """Decode a complete frame produced by :func:`encode_envelope`."""
    view = memoryview(data)
    if len(view) < 4:
        raise DecodeError("truncated length prefix", 0)
    (n,) = _U32.unpack_from(view, 0)
    if n > len(view) - 4:
        raise DecodeError("truncated frame", len(view))
    if n < len(view) - 4:
        raise DecodeError("trailing bytes after frame", 4 + n)
    return decode_body(view[4:], base=4)


# -- sockets ------------------------------------------------------------------


def recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:], n - got)
        if k == 0:
            raise ConnectionError("connection closed mid-frame")
        got += k
    return bytes(buf)


def recv_frame(sock: socket.socket) -> bytes | None:
    """Read one frame body from ``sock``; None on clean EOF between frames."""
    head = b""
    while len(head) < 4:
        chunk = sock.recv(4 - len(head))
        if not chunk:
            if head:
                raise ConnectionError("connection closed mid-frame")
            return None
        head += chunk
    (n,) = _U32.unpack(head)
    return recv_exact(sock, n) if n else b""


def send_frame(sock: socket.socket, body: bytes) -> None:
    head = _U32.pack(len(body))
    if len(body) < 65536:
        sock.sendall(head + body)
    else:
        sock.sendall(head)
        sock.sendall(body)
