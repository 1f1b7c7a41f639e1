"""Relay store wire protocol.

Requests are frames whose body is ``version(1) opcode(1) field*``; replies
are ``version(1) status(1) field*``. Fields use the same 4-byte big-endian
length prefix as envelope fields.
"""

from __future__ import annotations

import enum
import struct

from agentry import codec

DEFAULT_PORT = 7420
MAX_WAIT_SECONDS = 30.0

U32 = struct.Struct(">I")


class Op(enum.IntEnum):
    REGISTER = 0x01
    ADVERTISE = 0x02
    LOCATE = 0x03
    PUT_MSG = 0x04
    POLL_MSGS = 0x05
    CLOSE = 0x06
    DISCOVER = 0x07
    OBJ_PUT = 0x10
    OBJ_GET = 0x11
    OBJ_DEL = 0x12
    STATS = 0x20


class Status(enum.IntEnum):
    OK = 0
    NOT_FOUND = 1
    EXISTS = 2
    CLOSED = 3
    ERROR = 4


PUT_FRONT = 0x01


def request(op: Op, *fields: bytes) -> bytes:
    return bytes((codec.VERSION, op)) + codec.pack_fields(*fields)


def reply(status: Status, *fields: bytes) -> bytes:
    return bytes((codec.VERSION, status)) + codec.pack_fields(*fields)


def split(body: bytes, what: str) -> tuple[int, list[bytes]]:
    """Return the opcode/status byte and the fields of a message body."""
    r = codec.Reader(body, 4)
    version = r.byte("version")
    if version != codec.VERSION:
        raise codec.DecodeError(f"unsupported version {version}", 4)
    code = r.byte(what)
    fields = []
    while r.remaining():
        fields.append(r.field())
    return code, fields


def u32(n: int) -> bytes:
    return U32.pack(n)


def read_u32(raw: bytes) -> int:
    if len(raw) != 4:
        raise ValueError("expected a 4-byte integer field")
    return U32.unpack(raw)[0]
