"""Connector contract shared by the local and HTTP stores."""

from __future__ import annotations

import re
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Mapping

from ..schema import check_identifier

GIB = 1 << 30
DEFAULT_SIZE_CAP = 8 * GIB

KEY_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.-]*$")

Scalar = str | int | None


class StoreError(Exception):
    code = "store_error"


class StoreConnectionError(StoreError):
    code = "connection"


class KeyConflict(StoreError):
    code = "conflict"


class NotFound(StoreError):
    code = "not_found"


class UnknownTable(NotFound):
    code = "unknown_table"


class MissingRow(NotFound):
    code = "missing_row"


class MissingBlob(NotFound):
    code = "missing_blob"


class SizeCapExceeded(StoreError):
    code = "size_cap"


class ChecksumMismatch(StoreError):
    code = "checksum_mismatch"


class LengthViolation(StoreError):
    code = "length"


class InvalidRequest(StoreError):
    code = "invalid"


class Unauthorized(StoreError):
    code = "unauthorized"


ERRORS_BY_CODE = {
    cls.code: cls
    for cls in (
        StoreError, StoreConnectionError, KeyConflict, NotFound, UnknownTable, MissingRow, MissingBlob,
        SizeCapExceeded, ChecksumMismatch, LengthViolation, InvalidRequest, Unauthorized,
    )
}


def check_key(key: str) -> str:
    if not isinstance(key, str) or not KEY_RE.match(key):
        raise InvalidRequest(f"invalid row key: {key!r}")
    return key


def check_scalar(column: str, value: object) -> Scalar:
    if value is None or isinstance(value, str) or (isinstance(value, int) and not isinstance(value, bool)):
        return value  # type: ignore[return-value]
    raise InvalidRequest(f"column {column!r}: unsupported value type {type(value).__name__}")


@dataclass(frozen=True)
class BlobHandle:
    table: str
    key: str
    column: str
    size_bytes: int
    checksum: int


@dataclass
class RowRecord:
    """One stored row. ``blobs`` holds inline blob content when a fetch asked for it."""

    table: str
    key: str
    columns: dict[str, Scalar] = field(default_factory=dict)
    blob_refs: dict[str, BlobHandle] = field(default_factory=dict)
    blobs: dict[str, bytes] = field(default_factory=dict)


@dataclass(frozen=True)
class Ack:
    table: str
    key: str
    timestamp: float


@dataclass(frozen=True)
class FetchQuery:
    table: str
    keys: tuple[str, ...] | None = None
    include_columns: tuple[str, ...] | None = None
    include_blobs: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        check_identifier(self.table, "table name")
        if self.keys is not None:
            object.__setattr__(self, "keys", tuple(check_key(k) for k in self.keys))
        if self.include_columns is not None:
            object.__setattr__(self, "include_columns", tuple(self.include_columns))
        object.__setattr__(self, "include_blobs", tuple(self.include_blobs))
        for col in (self.include_columns or ()) + self.include_blobs:
            check_identifier(col, "column name")


BlobData = bytes | bytearray | memoryview | BinaryIO


class StoreEndpoint(ABC):
    """A connector target. ``fetch_counter`` counts fetch/fetch_blob calls, ``put_counter`` writes."""

    kind: str

    def __init__(self, location: str, credentials: str | None = None) -> None:
        if not location:
            raise ValueError("endpoint location must be nonempty")
        self.location = location
        self.credentials = credentials
        self._fetches = 0
        self._puts = 0
        self._counter_lock = threading.Lock()

    @property
    def fetch_counter(self) -> int:
        return self._fetches

    @property
    def put_counter(self) -> int:
        return self._puts

    def _count_fetch(self) -> None:
        with self._counter_lock:
            self._fetches += 1

    def _count_put(self) -> None:
        with self._counter_lock:
            self._puts += 1

    @property
    def uri(self) -> str:
        return self.location

    @abstractmethod
    def ping(self) -> None:
        """Raise :class:`StoreConnectionError` if the endpoint cannot be reached."""

    @abstractmethod
    def put_row(self, row: RowRecord, *, overwrite: bool = False, merge: bool = False) -> Ack:
        """Store one row's scalar columns.

        ``overwrite`` replaces an existing row (dropping its blobs); ``merge``
        updates only the given columns, creating the row if absent. Without
        either flag an existing key is a :class:`KeyConflict`.
        """

    @abstractmethod
    def put_rows(self, table: str, rows: Iterable[RowRecord], *, overwrite: bool = False) -> list[Ack]:
        """Store a batch of rows in one request."""

    @abstractmethod
    def put_blob(
        self, table: str, key: str, column: str, data: BlobData, *, size: int | None = None, overwrite: bool = False
    ) -> BlobHandle: ...

    @abstractmethod
    def fetch(self, query: FetchQuery) -> list[RowRecord]: ...

    @abstractmethod
    def fetch_blob(self, handle: BlobHandle) -> bytes: ...

    @abstractmethod
    def delete(self, table: str, key: str | None = None, column: str | None = None) -> None:
        """Remove a blob, a row, or (with no key) the whole table. Missing targets are ignored."""

    @abstractmethod
    def list_tables(self) -> list[str]: ...

    def close(self) -> None:
        pass

    def __enter__(self) -> "StoreEndpoint":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def columns_to_json(columns: Mapping[str, Scalar]) -> dict[str, Scalar]:
    return {check_identifier(c, "column name"): check_scalar(c, v) for c, v in columns.items()}
