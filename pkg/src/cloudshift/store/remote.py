"""HTTP connector speaking the simulator's wire protocol."""

from __future__ import annotations

import http.client
import json
import socket
from typing import Any, BinaryIO, Iterable
from urllib.parse import quote, urlencode, urlsplit

from ..clock import Clock
from .base import (
    ERRORS_BY_CODE,
    Ack,
    BlobData,
    BlobHandle,
    ChecksumMismatch,
    FetchQuery,
    InvalidRequest,
    RowRecord,
    StoreConnectionError,
    StoreEndpoint,
    StoreError,
    check_key,
    columns_to_json,
)
from .checksum import Fnv1a64, format_checksum, parse_checksum
from .wire import CHECKSUM_HEADER, DURATION_HEADER, read_exact, read_frames

BLOCK_SIZE = 1 << 20


class _HashingReader:
    def __init__(self, fh: BinaryIO) -> None:
        self._fh = fh
        self.hash = Fnv1a64()
        self.size = 0

    def read(self, n: int = -1) -> bytes:
        chunk = self._fh.read(n)
        self.hash.update(chunk)
        self.size += len(chunk)
        return chunk


class HttpStore(StoreEndpoint):
    kind = "remote_http"

    def __init__(
        self,
        base_url: str,
        credentials: str | None = None,
        *,
        timeout: float = 30.0,
        clock: Clock | None = None,
    ) -> None:
        parts = urlsplit(base_url)
        if parts.scheme != "http" or not parts.hostname:
            raise ValueError(f"expected http://host:port, got {base_url!r}")
        super().__init__(base_url.rstrip("/"), credentials)
        self.host = parts.hostname
        self.port = parts.port or 80
        self.timeout = timeout
        self.clock = clock

    # -- transport -------------------------------------------------------------

    def _headers(self, extra: dict[str, str] | None = None) -> dict[str, str]:
        headers = dict(extra or {})
        if self.credentials:
            headers["Authorization"] = f"Bearer {self.credentials}"
        return headers

    def _open(
        self, method: str, path: str, params: dict[str, Any] | None = None, body: Any = None, headers: dict[str, str] | None = None
    ) -> tuple[http.client.HTTPConnection, http.client.HTTPResponse]:
        url = path + (f"?{urlencode(params)}" if params else "")
        conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout, blocksize=BLOCK_SIZE)
        try:
            try:
                conn.request(method, url, body=body, headers=self._headers(headers))
            except (BrokenPipeError, ConnectionResetError):
                # the server may have rejected the upload early; its response can still be waiting
                pass
            resp = conn.getresponse()
        except (OSError, http.client.HTTPException) as exc:
            conn.close()
            raise StoreConnectionError(f"{method} {self.location}{path}: {exc}") from exc
        if self.clock is not None and self.clock.virtual:
            duration = resp.getheader(DURATION_HEADER)
            if duration is not None:
                self.clock.charge(float(duration))
        if resp.status >= 400:
            try:
                payload = json.loads(resp.read() or b"{}")
            except (json.JSONDecodeError, OSError):
                payload = {}
            finally:
                conn.close()
            cls = ERRORS_BY_CODE.get(payload.get("error", ""), StoreError)
            raise cls(payload.get("detail", f"HTTP {resp.status}"))
        return conn, resp

    def _json(self, method: str, path: str, params: dict[str, Any] | None = None, payload: Any = None) -> Any:
        body = None if payload is None else json.dumps(payload).encode("utf-8")
        headers = {"Content-Type": "application/json"} if body is not None else None
        conn, resp = self._open(method, path, params, body, headers)
        try:
            return json.loads(resp.read())
        except (OSError, http.client.HTTPException) as exc:
            raise StoreConnectionError(f"{method} {path}: {exc}") from exc
        finally:
            conn.close()

    @staticmethod
    def _path(*segments: str) -> str:
        return "/" + "/".join(quote(s, safe="") for s in segments)

    # -- contract --------------------------------------------------------------

    def ping(self) -> None:
        self._json("GET", "/health")

    def put_row(self, row: RowRecord, *, overwrite: bool = False, merge: bool = False) -> Ack:
        check_key(row.key)
        params = {}
        if overwrite:
            params["overwrite"] = 1
        if merge:
            params["merge"] = 1
        doc = self._json("PUT", self._path("tables", row.table, "rows", row.key), params, columns_to_json(row.columns))
        self._count_put()
        return Ack(doc["table"], doc["key"], doc["timestamp"])

    def put_rows(self, table: str, rows: Iterable[RowRecord], *, overwrite: bool = False) -> list[Ack]:
        body = []
        for r in rows:
            if r.table != table:
                raise InvalidRequest(f"row for table {r.table!r} in batch for {table!r}")
            body.append({"key": check_key(r.key), "columns": columns_to_json(r.columns)})
        params = {"overwrite": 1} if overwrite else None
        doc = self._json("PUT", self._path("tables", table, "rows"), params, {"rows": body})
        self._count_put()
        return [Ack(a["table"], a["key"], a["timestamp"]) for a in doc["acks"]]

    def put_blob(
        self, table: str, key: str, column: str, data: BlobData, *, size: int | None = None, overwrite: bool = False
    ) -> BlobHandle:
        check_key(key)
        if isinstance(data, (bytes, bytearray, memoryview)):
            size = len(data)
            expected: int | None = Fnv1a64(data).intdigest()
            body: Any = bytes(data)
            reader = None
        else:
            if size is None:
                raise InvalidRequest("streamed blob upload needs an explicit size")
            reader = _HashingReader(data)
            body = reader
            expected = None
        params = {"overwrite": 1} if overwrite else None
        headers = {"Content-Type": "application/octet-stream", "Content-Length": str(size)}
        doc = self._json_raw("PUT", self._path("tables", table, "rows", key, "blobs", column), params, body, headers)
        if reader is not None:
            expected = reader.hash.intdigest()
        handle = BlobHandle(table, key, column, doc["size_bytes"], parse_checksum(doc["checksum"]))
        if handle.checksum != expected or handle.size_bytes != size:
            raise ChecksumMismatch(
                f"upload {table}/{key}/{column}: sent {format_checksum(expected or 0)}, "
                f"store recorded {format_checksum(handle.checksum)}"
            )
        self._count_put()
        return handle

    def _json_raw(self, method: str, path: str, params: Any, body: Any, headers: dict[str, str]) -> Any:
        conn, resp = self._open(method, path, params, body, headers)
        try:
            return json.loads(resp.read())
        finally:
            conn.close()

    def fetch(self, query: FetchQuery) -> list[RowRecord]:
        params: dict[str, str] = {}
        if query.keys is not None:
            params["keys"] = ",".join(query.keys)
        if query.include_columns is not None:
            params["columns"] = ",".join(query.include_columns)
        if query.include_blobs:
            params["blobs"] = ",".join(query.include_blobs)
        conn, resp = self._open("GET", self._path("tables", query.table, "rows"), params)
        try:
            # materialised so a mid-stream failure discards everything
            rows = list(read_frames(query.table, resp.read))
        except (OSError, EOFError, http.client.HTTPException, socket.timeout) as exc:
            raise StoreConnectionError(f"fetch {query.table}: stream broken: {exc}") from exc
        finally:
            conn.close()
        self._count_fetch()
        return rows

    def fetch_blob(self, handle: BlobHandle) -> bytes:
        conn, resp = self._open("GET", self._path("tables", handle.table, "rows", handle.key, "blobs", handle.column))
        try:
            size = int(resp.getheader("Content-Length"))
            data = read_exact(resp.read, size)
            recorded = parse_checksum(resp.getheader(CHECKSUM_HEADER))
        except (OSError, EOFError, http.client.HTTPException) as exc:
            raise StoreConnectionError(f"fetch blob {handle.table}/{handle.key}/{handle.column}: {exc}") from exc
        finally:
            conn.close()
        self._count_fetch()
        actual = Fnv1a64(data).intdigest()
        if actual != recorded:
            raise ChecksumMismatch(
                f"blob {handle.table}/{handle.key}/{handle.column}: stored {format_checksum(recorded)}, "
                f"read {format_checksum(actual)}"
            )
        return data

    def delete(self, table: str, key: str | None = None, column: str | None = None) -> None:
        segments = ["tables", table]
        if key is not None:
            segments += ["rows", key]
            if column is not None:
                segments += ["blobs", column]
        self._json("DELETE", self._path(*segments))

    def list_tables(self) -> list[str]:
        return self._json("GET", "/tables")["tables"]

