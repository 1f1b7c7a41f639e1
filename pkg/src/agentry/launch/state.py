"""Dictionary-like checkpoint storage on the local file system."""

from __future__ import annotations

import os
import tempfile
from collections.abc import Iterator, MutableMapping
from pathlib import Path
from urllib.parse import quote, unquote


class StateStore(MutableMapping[str, bytes]):
    """Persists each key as ``<root>/<agent-id>/<key>``.

    Writes go to a temporary file that is fsynced and renamed over the old
    value, so a crash leaves either the previous or the new value.
    """

    def __init__(self, root: str | os.PathLike[str], agent_id: object) -> None:
        self.path = Path(root) / str(agent_id).replace(":", "-")
        self.path.mkdir(parents=True, exist_ok=True)

    def _file(self, key: str) -> Path:
        if not key:
            raise KeyError("empty key")
        return self.path / quote(key, safe="")

    def __getitem__(self, key: str) -> bytes:
        try:
            return self._file(key).read_bytes()
        except FileNotFoundError:
            raise KeyError(key) from None

    def __setitem__(self, key: str, value: bytes) -> None:
        target = self._file(key)
        fd, tmp = tempfile.mkstemp(dir=self.path, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(bytes(value))
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, target)
        except BaseException:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
            raise
        dir_fd = os.open(self.path, os.O_RDONLY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)

    def __delitem__(self, key: str) -> None:
        try:
            self._file(key).unlink()
        except FileNotFoundError:
            raise KeyError(key) from None

    def __iter__(self) -> Iterator[str]:
        for p in sorted(self.path.iterdir()):
            if not p.name.startswith(".tmp-"):
                yield unquote(p.name)

    def __len__(self) -> int:
        return sum(1 for _ in self)

    def set(self, key: str, value: bytes) -> None:
        self[key] = value

    def delete(self, key: str) -> None:
        del self[key]
