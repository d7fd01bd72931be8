"""Directory-backed store: ``{root}/{table}/{key}/row.json`` plus ``{column}.blob`` files."""

from __future__ import annotations

import io
import json
import os
import shutil
import tempfile
import threading
import time
from collections import defaultdict
from pathlib import Path
from typing import Any, Callable, Iterable

from ..schema import StorageModel, check_identifier
from .base import (
    DEFAULT_SIZE_CAP,
    Ack,
    BlobData,
    BlobHandle,
    ChecksumMismatch,
    FetchQuery,
    InvalidRequest,
    KeyConflict,
    LengthViolation,
    MissingBlob,
    MissingRow,
    RowRecord,
    SizeCapExceeded,
    StoreConnectionError,
    StoreEndpoint,
    UnknownTable,
    check_key,
    columns_to_json,
)
from .checksum import CHUNK_SIZE, Fnv1a64, format_checksum, parse_checksum

ROW_FILE = "row.json"


class LocalStore(StoreEndpoint):
    """Filesystem store. Also the backend the simulator server serves from.

    Null column values are not stored: writing ``None`` clears the column,
    including any blob held under that column name.
    """

    kind = "local"

    def __init__(
        self,
        root: str | os.PathLike[str],
        *,
        storage: StorageModel | None = None,
        size_cap_bytes: int = DEFAULT_SIZE_CAP,
        create: bool = True,
    ) -> None:
        super().__init__(str(root))
        self.root = Path(root)
        if create:
            self.root.mkdir(parents=True, exist_ok=True)
        self.storage = storage
        self.size_cap_bytes = size_cap_bytes
        self._locks: defaultdict[tuple[str, str], threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    @property
    def uri(self) -> str:
        return f"local:{self.root}"

    # -- helpers -----------------------------------------------------------

    def _lock(self, table: str, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[(table, key)]

    def _table_dir(self, table: str) -> Path:
        return self.root / check_identifier(table, "table name")

    def _row_dir(self, table: str, key: str) -> Path:
        return self._table_dir(table) / check_key(key)

    def _read_meta(self, table: str, key: str) -> dict[str, Any] | None:
        try:
            return json.loads((self._row_dir(table, key) / ROW_FILE).read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None

    def _write_meta(self, table: str, key: str, meta: dict[str, Any]) -> None:
        row_dir = self._row_dir(table, key)
        row_dir.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=row_dir, prefix=".row-", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True)
        os.replace(tmp, row_dir / ROW_FILE)

    def _check_columns(self, table: str, key: str, columns: dict[str, Any]) -> None:
        if self.storage is None:
            return
        tdef = self.storage.table(table)
        if tdef is None:
            raise UnknownTable(f"table {table!r} is not in the store schema")
        for name, value in columns.items():
            cdef = tdef.column(name)
            if cdef is None:
                raise InvalidRequest(f"unknown column {table}.{name}")
            if isinstance(value, str) and cdef.max_length is not None:
                n = len(value.encode("utf-8"))
                if n > cdef.max_length:
                    raise LengthViolation(f"{table}.{name} for key {key!r}: {n} bytes > {cdef.max_length}")
        for pk in tdef.primary_key:
            if pk in columns and str(columns[pk]) != key:
                raise InvalidRequest(f"primary key column {pk!r} is {columns[pk]!r} but row key is {key!r}")

    def _drop_blob_files(self, table: str, key: str, columns: Iterable[str]) -> None:
        row_dir = self._row_dir(table, key)
        for col in columns:
            try:
                (row_dir / f"{col}.blob").unlink()
            except FileNotFoundError:
                pass

    def _handle(self, table: str, key: str, column: str, entry: dict[str, Any]) -> BlobHandle:
        return BlobHandle(table, key, column, entry["size"], parse_checksum(entry["checksum"]))

    def _record(self, table: str, key: str, meta: dict[str, Any], include_columns: tuple[str, ...] | None) -> RowRecord:
        cols = meta["columns"]
        if include_columns is not None:
            cols = {c: v for c, v in cols.items() if c in include_columns}
        refs = {c: self._handle(table, key, c, e) for c, e in sorted(meta["blobs"].items())}
        return RowRecord(table, key, dict(cols), refs)

    # -- row writes --------------------------------------------------------

    def _write_row(self, table: str, key: str, columns: dict[str, Any], overwrite: bool, merge: bool) -> Ack:
        check_key(key)
        columns = columns_to_json(columns)
        self._check_columns(table, key, columns)
        with self._lock(table, key):
            meta = self._read_meta(table, key)
            if meta is not None and not (overwrite or merge):
                raise KeyConflict(f"row {table}/{key} exists; pass overwrite")
            if meta is None or (overwrite and not merge):
                if meta is not None:
                    self._drop_blob_files(table, key, meta["blobs"])
                meta = {"key": key, "columns": {}, "blobs": {}}
            for name, value in columns.items():
                if value is None:
                    meta["columns"].pop(name, None)
                    if meta["blobs"].pop(name, None) is not None:
                        self._drop_blob_files(table, key, [name])
                else:
                    meta["columns"][name] = value
            meta["timestamp"] = time.time()
            self._write_meta(table, key, meta)
        return Ack(table, key, meta["timestamp"])

    def put_row(self, row: RowRecord, *, overwrite: bool = False, merge: bool = False) -> Ack:
        ack = self._write_row(row.table, row.key, row.columns, overwrite, merge)
        self._count_put()
        return ack

    def put_rows(self, table: str, rows: Iterable[RowRecord], *, overwrite: bool = False) -> list[Ack]:
        rows = list(rows)
        for row in rows:
            if row.table != table:
                raise InvalidRequest(f"row for table {row.table!r} in batch for {table!r}")
            check_key(row.key)
            self._check_columns(table, row.key, columns_to_json(row.columns))
        acks = [self._write_row(table, r.key, r.columns, overwrite, False) for r in rows]
        self._count_put()
        return acks

    # -- blobs ---------------------------------------------------------------

    def write_blob_stream(
        self,
        table: str,
        key: str,
        column: str,
        read: Callable[[int], bytes],
        size: int | None,
        *,
        overwrite: bool = False,
    ) -> BlobHandle:
        """Stream a blob from ``read`` into place, hashing as it goes."""
        check_identifier(column, "column name")
        if size is not None and size > self.size_cap_bytes:
            raise SizeCapExceeded(f"blob of {size} bytes exceeds cap {self.size_cap_bytes}")
        row_dir = self._row_dir(table, key)
        meta = self._read_meta(table, key)
        if meta is None:
            raise MissingRow(f"no row {table}/{key} for blob {column!r}")
        if column in meta["blobs"] and not overwrite:
            raise KeyConflict(f"blob {table}/{key}/{column} exists; pass overwrite")
        h = Fnv1a64()
        written = 0
        fd, tmp = tempfile.mkstemp(dir=row_dir, prefix=f".{column}-", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                while True:
                    want = CHUNK_SIZE if size is None else min(CHUNK_SIZE, size - written)
                    if want <= 0:
                        break
                    chunk = read(want)
                    if not chunk:
                        break
                    written += len(chunk)
                    if written > self.size_cap_bytes:
                        raise SizeCapExceeded(f"blob exceeds cap {self.size_cap_bytes}")
                    h.update(chunk)
                    fh.write(chunk)
            if size is not None and written != size:
                raise InvalidRequest(f"blob body ended after {written} of {size} bytes")
            with self._lock(table, key):
                meta = self._read_meta(table, key)
                if meta is None:
                    raise MissingRow(f"row {table}/{key} vanished during blob upload")
                if column in meta["blobs"] and not overwrite:
                    raise KeyConflict(f"blob {table}/{key}/{column} exists; pass overwrite")
                os.replace(tmp, row_dir / f"{column}.blob")
                meta["columns"].pop(column, None)
                meta["blobs"][column] = {"size": written, "checksum": format_checksum(h.intdigest())}
                self._write_meta(table, key, meta)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        return BlobHandle(table, key, column, written, h.intdigest())

    def put_blob(
        self, table: str, key: str, column: str, data: BlobData, *, size: int | None = None, overwrite: bool = False
    ) -> BlobHandle:
        if isinstance(data, (bytes, bytearray, memoryview)):
            size = len(data)
            data = io.BytesIO(data)
        handle = self.write_blob_stream(table, key, column, data.read, size, overwrite=overwrite)
        self._count_put()
        return handle

    def blob_path(self, handle: BlobHandle) -> Path:
        return self._row_dir(handle.table, handle.key) / f"{handle.column}.blob"

    def fetch_blob(self, handle: BlobHandle) -> bytes:
        meta = self._read_meta(handle.table, handle.key)
        if meta is None or handle.column not in meta["blobs"]:
            raise MissingBlob(f"no blob {handle.table}/{handle.key}/{handle.column}")
        stored = self._handle(handle.table, handle.key, handle.column, meta["blobs"][handle.column])
        try:
            data = self.blob_path(handle).read_bytes()
        except FileNotFoundError:
            raise MissingBlob(f"blob file for {handle.table}/{handle.key}/{handle.column} is gone") from None
        self._count_fetch()
        actual = Fnv1a64(data).intdigest()
        if actual != stored.checksum or len(data) != stored.size_bytes:
            raise ChecksumMismatch(
                f"blob {handle.table}/{handle.key}/{handle.column}: stored {format_checksum(stored.checksum)}, "
                f"read {format_checksum(actual)} ({len(data)} bytes)"
            )
        return data

    # -- reads ---------------------------------------------------------------

    def scan(self, query: FetchQuery) -> list[tuple[RowRecord, dict[str, Path]]]:
        """Resolve a fetch to row metadata plus paths of the requested blob files (no content read)."""
        tdir = self._table_dir(query.table)
        if not tdir.is_dir():
            raise UnknownTable(f"unknown table {query.table!r}")
        keys = query.keys if query.keys is not None else sorted(p.name for p in tdir.iterdir() if not p.name.startswith("."))
        out = []
        for key in keys:
            meta = self._read_meta(query.table, key)
            if meta is None:
                continue
            record = self._record(query.table, key, meta, query.include_columns)
            paths = {
                col: self._row_dir(query.table, key) / f"{col}.blob"
                for col in query.include_blobs
                if col in record.blob_refs
            }
            out.append((record, paths))
        return out

    def fetch(self, query: FetchQuery) -> list[RowRecord]:
        rows = []
        for record, paths in self.scan(query):
            for col, path in paths.items():
                try:
                    record.blobs[col] = path.read_bytes()
                except FileNotFoundError:
                    raise MissingBlob(f"blob file for {query.table}/{record.key}/{col} is gone") from None
            rows.append(record)
        self._count_fetch()
        return rows

    def delete(self, table: str, key: str | None = None, column: str | None = None) -> None:
        if key is None:
            shutil.rmtree(self._table_dir(table), ignore_errors=True)
            return
        with self._lock(table, key):
            if column is None:
                shutil.rmtree(self._row_dir(table, key), ignore_errors=True)
                return
            meta = self._read_meta(table, key)
            if meta is None:
                return
            if meta["blobs"].pop(column, None) is not None:
                self._drop_blob_files(table, key, [column])
            meta["columns"].pop(column, None)
            self._write_meta(table, key, meta)

    def list_tables(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir() and not p.name.startswith("."))

    def ping(self) -> None:
        if not self.root.is_dir():
            raise StoreConnectionError(f"store root {self.root} does not exist")
