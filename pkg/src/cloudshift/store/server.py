"""Store simulator: serves a :class:`LocalStore` over HTTP with network shaping."""

from __future__ import annotations

import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any
from urllib.parse import parse_qs, unquote, urlsplit

from ..schema import ModelError, StorageModel
from .base import DEFAULT_SIZE_CAP, FetchQuery, InvalidRequest, MissingBlob, RowRecord, StoreError, Unauthorized
from .checksum import format_checksum
from .local import LocalStore
from .shaping import Shaper, ShapingProfile
from .wire import CHECKSUM_HEADER, DURATION_HEADER, FRAMED_STREAM, HTTP_STATUS, LENGTH, OCTET_STREAM, row_header

log = logging.getLogger(__name__)

STREAM_CHUNK = 1 << 20
# an early-rejected upload body is drained up to this size so the client can read the error
DRAIN_LIMIT = 64 << 20


def _flag(params: dict[str, list[str]], name: str) -> bool:
    return params.get(name, ["0"])[-1] in ("1", "true")


def _csv(params: dict[str, list[str]], name: str) -> tuple[str, ...] | None:
    if name not in params:
        return None
    raw = params[name][-1]
    return tuple(x for x in raw.split(",") if x)


class _Handler(BaseHTTPRequestHandler):
    server: "_Server"
    server_version = "cloudshift-sim/0.1"

    def log_message(self, format: str, *args: Any) -> None:  # noqa: A002
        log.debug("%s " + format, self.address_string(), *args)

    # -- shaping ------------------------------------------------------------

    def _begin(self, blob_bytes: int = 0) -> None:
        shaper = self.server.shaper
        latency = shaper.latency_ms()
        self._duration_ms = latency + shaper.profile.transfer_ms(blob_bytes)
        if not self.server.virtual and latency > 0:
            time.sleep(latency / 1000.0)

    def _throttle(self, nbytes: int) -> None:
        if not self.server.virtual:
            delay = self.server.shaper.profile.transfer_ms(nbytes)
            if delay > 0:
                time.sleep(delay / 1000.0)

    def _shaping_headers(self) -> None:
        if self.server.virtual:
            self.send_header(DURATION_HEADER, repr(self._duration_ms))

    # -- responses ------------------------------------------------------------

    def _send_json(self, status: int, payload: Any) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self._shaping_headers()
        self.end_headers()
        self.wfile.write(body)

    def _send_error(self, exc: Exception) -> None:
        code = exc.code if isinstance(exc, StoreError) else "invalid"
        if not hasattr(self, "_duration_ms"):
            self._duration_ms = 0.0
        self._send_json(HTTP_STATUS.get(code, 500), {"error": code, "detail": str(exc)})

    def _read_json(self) -> Any:
        n = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(n) if n else b""
        self._body_consumed = True
        try:
            return json.loads(raw or b"{}")
        except json.JSONDecodeError as exc:
            raise InvalidRequest(f"request body is not JSON: {exc}") from exc

    def _drain(self) -> None:
        n = int(self.headers.get("Content-Length") or 0)
        if 0 < n <= DRAIN_LIMIT:
            while n:
                chunk = self.rfile.read(min(n, STREAM_CHUNK))
                if not chunk:
                    break
                n -= len(chunk)
        else:
            self.close_connection = True

    def _route(self) -> tuple[list[str], dict[str, list[str]]]:
        parts = urlsplit(self.path)
        segments = [unquote(s) for s in parts.path.split("/") if s]
        return segments, parse_qs(parts.query, keep_blank_values=True)

    def _authorize(self) -> None:
        token = self.server.token
        if token and self.headers.get("Authorization") != f"Bearer {token}":
            raise Unauthorized("missing or wrong bearer token")

    def _dispatch(self, method: str) -> None:
        try:
            segments, params = self._route()
            if segments == ["health"] and method == "GET":
                self._begin()
                self._send_json(200, {"status": "ok"})
                return
            self._authorize()
            handler = self._match(method, segments)
            if handler is None:
                self._begin()
                self._drain()
                self._send_json(404, {"error": "not_found", "detail": f"no route {method} {self.path}"})
                return
            handler(segments, params)
        except (StoreError, ModelError) as exc:
            self._drain_if_pending()
            self._send_error(exc)
        except (BrokenPipeError, ConnectionResetError):
            self.close_connection = True

    def _drain_if_pending(self) -> None:
        if not getattr(self, "_body_consumed", False) and self.command == "PUT":
            self._drain()

    def _match(self, method: str, seg: list[str]):
        if len(seg) == 1 and seg[0] == "tables" and method == "GET":
            return self._list_tables
        if len(seg) < 2 or seg[0] != "tables":
            return None
        if len(seg) == 2 and method == "DELETE":
            return self._delete
        if len(seg) == 3 and seg[2] == "rows":
            return {"GET": self._get_rows, "PUT": self._put_rows}.get(method)
        if len(seg) == 4 and seg[2] == "rows":
            return {"PUT": self._put_row, "DELETE": self._delete}.get(method)
        if len(seg) == 6 and seg[2] == "rows" and seg[4] == "blobs":
            return {"PUT": self._put_blob, "GET": self._get_blob, "DELETE": self._delete}.get(method)
        return None

    # -- routes ----------------------------------------------------------------

    def _list_tables(self, seg: list[str], params: dict[str, list[str]]) -> None:
        self._begin()
        self._send_json(200, {"tables": self.server.store.list_tables()})

    def _put_row(self, seg: list[str], params: dict[str, list[str]]) -> None:
        self._begin()
        columns = self._read_json()
        if not isinstance(columns, dict):
            raise InvalidRequest("row body must be a JSON object of columns")
        ack = self.server.store.put_row(
            RowRecord(seg[1], seg[3], columns), overwrite=_flag(params, "overwrite"), merge=_flag(params, "merge")
        )
        self._send_json(200, {"table": ack.table, "key": ack.key, "timestamp": ack.timestamp})

    def _put_rows(self, seg: list[str], params: dict[str, list[str]]) -> None:
        self._begin()
        doc = self._read_json()
        rows = doc.get("rows") if isinstance(doc, dict) else None
        if not isinstance(rows, list):
            raise InvalidRequest("batch body must be {\"rows\": [...]}")
        records = []
        for r in rows:
            if not isinstance(r, dict) or not isinstance(r.get("columns"), dict):
                raise InvalidRequest("each batch row needs key and columns")
            records.append(RowRecord(seg[1], r.get("key"), r["columns"]))
        acks = self.server.store.put_rows(seg[1], records, overwrite=_flag(params, "overwrite"))
        self._send_json(200, {"acks": [{"table": a.table, "key": a.key, "timestamp": a.timestamp} for a in acks]})

    def _put_blob(self, seg: list[str], params: dict[str, list[str]]) -> None:
        length = self.headers.get("Content-Length")
        if length is None:
            raise InvalidRequest("blob upload requires Content-Length")
        size = int(length)
        self._begin(size)
        read = self.rfile.read

        def shaped_read(n: int) -> bytes:
            chunk = read(n)
            self._throttle(len(chunk))
            return chunk

        handle = self.server.store.write_blob_stream(
            seg[1], seg[3], seg[5], shaped_read, size, overwrite=_flag(params, "overwrite")
        )
        self._body_consumed = True
        self._send_json(
            200,
            {
                "table": handle.table,
                "key": handle.key,
                "column": handle.column,
                "size_bytes": handle.size_bytes,
                "checksum": format_checksum(handle.checksum),
            },
        )

    def _get_rows(self, seg: list[str], params: dict[str, list[str]]) -> None:
        query = FetchQuery(
            seg[1],
            keys=_csv(params, "keys"),
            include_columns=_csv(params, "columns"),
            include_blobs=_csv(params, "blobs") or (),
        )
        resolved = self.server.store.scan(query)
        frames: list[tuple[bytes, list[tuple[int, Path]]]] = []
        total = 0
        blob_bytes = 0
        for record, paths in resolved:
            inline = sorted(paths)
            header = row_header(record, inline)
            blobs = [(record.blob_refs[c].size_bytes, paths[c]) for c in inline]
            frames.append((header, blobs))
            total += LENGTH.size + len(header) + sum(LENGTH.size + n for n, _ in blobs)
            blob_bytes += sum(n for n, _ in blobs)
        self._begin(blob_bytes)
        self.send_response(200)
        self.send_header("Content-Type", FRAMED_STREAM)
        self.send_header("Content-Length", str(total))
        self._shaping_headers()
        self.end_headers()
        for header, blobs in frames:
            self.wfile.write(LENGTH.pack(len(header)) + header)
            for size, path in blobs:
                self.wfile.write(LENGTH.pack(size))
                self._stream_file(path, size)

    def _stream_file(self, path: Path, size: int) -> None:
        sent = 0
        with open(path, "rb") as fh:
            while sent < size:
                chunk = fh.read(min(STREAM_CHUNK, size - sent))
                if not chunk:
                    # file shrank underneath us; the client sees a short stream
                    self.close_connection = True
                    return
                self._throttle(len(chunk))
                self.wfile.write(chunk)
                sent += len(chunk)

    def _get_blob(self, seg: list[str], params: dict[str, list[str]]) -> None:
        record, paths = self._scan_one(seg[1], seg[3], seg[5])
        handle = record.blob_refs[seg[5]]
        self._begin(handle.size_bytes)
        self.send_response(200)
        self.send_header("Content-Type", OCTET_STREAM)
        self.send_header("Content-Length", str(handle.size_bytes))
        self.send_header(CHECKSUM_HEADER, format_checksum(handle.checksum))
        self._shaping_headers()
        self.end_headers()
        self._stream_file(paths[seg[5]], handle.size_bytes)

    def _scan_one(self, table: str, key: str, column: str):
        found = self.server.store.scan(FetchQuery(table, keys=(key,), include_blobs=(column,)))
        if not found or column not in found[0][1] or not found[0][1][column].exists():
            raise MissingBlob(f"no blob {table}/{key}/{column}")
        return found[0]

    def _delete(self, seg: list[str], params: dict[str, list[str]]) -> None:
        self._begin()
        key = seg[3] if len(seg) >= 4 else None
        column = seg[5] if len(seg) >= 6 else None
        self.server.store.delete(seg[1], key, column)
        self._send_json(200, {"deleted": "/".join(seg[1:])})

    def do_GET(self) -> None:  # noqa: N802
        self._dispatch("GET")

    def do_PUT(self) -> None:  # noqa: N802
        self._dispatch("PUT")

    def do_DELETE(self) -> None:  # noqa: N802
        self._dispatch("DELETE")


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    store: LocalStore
    shaper: Shaper
    virtual: bool
    token: str | None


class SimulatorServer:
    """A running (or startable) store simulator.

    ``clock_mode="virtual"`` disables sleeping; each response instead carries
    the request's simulated duration in ``X-Sim-Duration-Ms`` for clients
    running a virtual clock.
    """

    def __init__(
        self,
        root: str | Path,
        shaping: ShapingProfile | None = None,
        bind: tuple[str, int] = ("127.0.0.1", 0),
        *,
        clock_mode: str = "wall",
        token: str | None = None,
        storage: StorageModel | None = None,
        size_cap_bytes: int = DEFAULT_SIZE_CAP,
        seed: int = 0,
    ) -> None:
        if clock_mode not in ("wall", "virtual"):
            raise ValueError(f"unknown clock mode {clock_mode!r}")
        self.httpd = _Server(bind, _Handler)
        self.httpd.store = LocalStore(root, storage=storage, size_cap_bytes=size_cap_bytes)
        self.httpd.shaper = Shaper(shaping or ShapingProfile(), seed)
        self.httpd.virtual = clock_mode == "virtual"
        self.httpd.token = token
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.httpd.server_address[:2]
        return str(host), int(port)

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "SimulatorServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, name="cloudshift-sim", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def shutdown(self) -> None:
        if self._thread is not None:
            self.httpd.shutdown()
            self._thread.join()
            self._thread = None
        self.httpd.server_close()

    def __enter__(self) -> "SimulatorServer":
        if self._thread is None:
            self.start()
        return self

    def __exit__(self, *exc: object) -> None:
        self.shutdown()


def serve(
    root: str | Path,
    shaping: ShapingProfile | None = None,
    bind: tuple[str, int] = ("127.0.0.1", 0),
    **kwargs: Any,
) -> SimulatorServer:
    """Start a simulator in a background thread and return it (bind errors raise ``OSError``)."""
    return SimulatorServer(root, shaping, bind, **kwargs).start()
