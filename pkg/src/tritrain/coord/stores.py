"""Abstract datastore/blobstore with in-memory and directory backends.

The datastore holds small status entities; the blobstore holds opaque named
payloads (prediction files, models, aggregated selections). Directory
backends write through a temp file followed by an atomic rename, so a
concurrent reader never observes a partial entity or blob. Each key has a
single writer under the coordination protocol, so no further locking is
needed.

Status entities serialize as key-value text, one `Key: value` pair per line
(values may themselves contain ": "; parsing splits on the first separator):

    Status: at iteration: 2
    LastIteration: 1
    Finished: false
"""

from __future__ import annotations

import os
import tempfile
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path


class StoreError(RuntimeError):
    """Raised when a backend cannot complete a read or write."""


@dataclass(frozen=True)
class StatusRecord:
    """Progress marker for one worker or for the aggregation phase."""

    status: str
    last_iteration: int
    finished: bool

    def to_text(self) -> str:
        return (
            f"Status: {self.status}\n"
            f"LastIteration: {self.last_iteration}\n"
            f"Finished: {'true' if self.finished else 'false'}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "StatusRecord":
        fields: dict[str, str] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            if ": " not in line:
                raise StoreError(f"bad status line {line!r}")
            key, value = line.split(": ", 1)
            fields[key] = value
        try:
            return cls(
                status=fields["Status"],
                last_iteration=int(fields["LastIteration"]),
                finished={"true": True, "false": False}[fields["Finished"].lower()],
            )
        except (KeyError, ValueError) as exc:
            raise StoreError(f"malformed status entity: {exc}") from exc


# Field names mirror the coordination entities: the training status of
# worker <idx> lives at `training_status_w<idx>`, aggregation progress at
# `aggregate_status`.
AGGREGATE_STATUS_KEY = "aggregate_status"


def training_status_key(worker: int) -> str:
    return f"training_status_w{worker}"


class Datastore(ABC):
    @abstractmethod
    def get(self, key: str) -> StatusRecord | None: ...

    @abstractmethod
    def put(self, key: str, record: StatusRecord) -> None: ...


class Blobstore(ABC):
    @abstractmethod
    def upload(self, name: str, data: bytes) -> None: ...

    @abstractmethod
    def download(self, name: str) -> bytes | None: ...

    @abstractmethod
    def exists(self, name: str) -> bool: ...


class InMemoryDatastore(Datastore):
    def __init__(self) -> None:
        self._entities: dict[str, StatusRecord] = {}

    def get(self, key: str) -> StatusRecord | None:
        return self._entities.get(key)

    def put(self, key: str, record: StatusRecord) -> None:
        self._entities[key] = record


class InMemoryBlobstore(Blobstore):
    def __init__(self) -> None:
        self._blobs: dict[str, bytes] = {}

    def upload(self, name: str, data: bytes) -> None:
        self._blobs[name] = bytes(data)

    def download(self, name: str) -> bytes | None:
        return self._blobs.get(name)

    def exists(self, name: str) -> bool:
        return name in self._blobs

    def names(self) -> list[str]:
        return sorted(self._blobs)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise StoreError(f"cannot write {path}: {exc}") from exc


class DirectoryDatastore(Datastore):
    """One file per entity under <root>/datastore, atomic replace on put."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root) / "datastore"

    def get(self, key: str) -> StatusRecord | None:
        path = self.root / f"{key}.txt"
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None
        except OSError as exc:
            raise StoreError(f"cannot read {path}: {exc}") from exc
        return StatusRecord.from_text(text)

    def put(self, key: str, record: StatusRecord) -> None:
        _atomic_write(self.root / f"{key}.txt", record.to_text().encode("utf-8"))


class DirectoryBlobstore(Blobstore):
    """One file per blob under <root>/blobs, names may contain slashes."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root) / "blobs"

    def _path(self, name: str) -> Path:
        path = (self.root / name).resolve()
        if self.root.resolve() not in path.parents:
            raise StoreError(f"blob name escapes the store root: {name!r}")
        return path

    def upload(self, name: str, data: bytes) -> None:
        _atomic_write(self._path(name), data)

    def download(self, name: str) -> bytes | None:
        try:
            return self._path(name).read_bytes()
        except FileNotFoundError:
            return None
        except OSError as exc:
            raise StoreError(f"cannot read blob {name!r}: {exc}") from exc

    def exists(self, name: str) -> bool:
        return self._path(name).exists()
