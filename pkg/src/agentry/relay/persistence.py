"""Append-only log plus periodic snapshot for relay store state.

Only the registry, behavior specs, mailbox states and pending messages are
persisted; endpoints and stored objects are not.
"""

from __future__ import annotations

import os
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator

from agentry import codec
from agentry.ids import EntityId

LOG_NAME = "relay.log"
SNAPSHOT_NAME = "relay.snap"

REC_REGISTER = 1
REC_CLOSE = 2
REC_PUT = 3
REC_POP = 4

_U32 = struct.Struct(">I")


@dataclass
class PersistedEntity:
    entity: EntityId
    spec: bytes = b""
    closed: bool = False
    pending: deque[bytes] = field(default_factory=deque)


def _record(kind: int, *fields: bytes) -> bytes:
    body = bytes((kind,)) + codec.pack_fields(*fields)
    return _U32.pack(len(body)) + body


def _read_records(fh: BinaryIO) -> Iterator[tuple[int, list[bytes]]]:
    while True:
        head = fh.read(4)
        if len(head) < 4:
            return
        (n,) = _U32.unpack(head)
        body = fh.read(n)
        if len(body) < n:
            return  # torn tail from a crash mid-append
        r = codec.Reader(body)
        kind = r.byte()
        fields = []
        while r.remaining():
            fields.append(r.field())
        yield kind, fields


def apply(state: dict[EntityId, PersistedEntity], kind: int, fields: list[bytes]) -> None:
    entity = EntityId.from_bytes(fields[0])
    if kind == REC_REGISTER:
        state.setdefault(entity, PersistedEntity(entity, fields[1]))
        return
    rec = state.get(entity)
    if rec is None:
        return
    if kind == REC_CLOSE:
        rec.closed = True
    elif kind == REC_PUT:
        if fields[2] == b"\x01":
            rec.pending.appendleft(fields[1])
        else:
            rec.pending.append(fields[1])
    elif kind == REC_POP:
        for _ in range(min(_U32.unpack(fields[1])[0], len(rec.pending))):
            rec.pending.popleft()


class StoreLog:
    def __init__(self, data_dir: str | os.PathLike[str], snapshot_every: int = 10_000) -> None:
        self.dir = Path(data_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.snapshot_every = snapshot_every
        self._since_snapshot = 0
        self._fh: BinaryIO | None = None

    def load(self) -> dict[EntityId, PersistedEntity]:
        state: dict[EntityId, PersistedEntity] = {}
        for name in (SNAPSHOT_NAME, LOG_NAME):
            path = self.dir / name
            if path.exists():
                with open(path, "rb") as fh:
                    for kind, fields in _read_records(fh):
                        apply(state, kind, fields)
        return state

    def open(self) -> None:
        self._fh = open(self.dir / LOG_NAME, "ab")

    def _append(self, data: bytes, sync: bool = False) -> None:
        assert self._fh is not None
        self._fh.write(data)
        if sync:
            self._fh.flush()
            os.fsync(self._fh.fileno())
        self._since_snapshot += 1

    def register(self, entity: EntityId, spec: bytes) -> None:
        self._append(_record(REC_REGISTER, entity.to_bytes(), spec), sync=True)

    def close_entity(self, entity: EntityId) -> None:
        self._append(_record(REC_CLOSE, entity.to_bytes()), sync=True)

    def put(self, entity: EntityId, msg: bytes, front: bool) -> None:
        self._append(_record(REC_PUT, entity.to_bytes(), msg, b"\x01" if front else b"\x00"))

    def pop(self, entity: EntityId, count: int) -> None:
        self._append(_record(REC_POP, entity.to_bytes(), _U32.pack(count)))

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()

    def needs_snapshot(self) -> bool:
        return self._since_snapshot >= self.snapshot_every

    def snapshot(self, state: dict[EntityId, PersistedEntity]) -> None:
        """Write the full state atomically, then truncate the log."""
        tmp = self.dir / (SNAPSHOT_NAME + ".tmp")
        with open(tmp, "wb") as fh:
            for rec in state.values():
                fh.write(_record(REC_REGISTER, rec.entity.to_bytes(), rec.spec))
                for msg in rec.pending:
                    fh.write(_record(REC_PUT, rec.entity.to_bytes(), msg, b"\x00"))
                if rec.closed:
                    fh.write(_record(REC_CLOSE, rec.entity.to_bytes()))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.dir / SNAPSHOT_NAME)
        if self._fh is not None:
            self._fh.close()
        self._fh = open(self.dir / LOG_NAME, "wb")
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._since_snapshot = 0

    def close(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            self._fh.close()
            self._fh = None
