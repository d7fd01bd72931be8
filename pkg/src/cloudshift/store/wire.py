"""Wire-level constants and the length-prefixed framing used by row fetches.

A fetch response body is a sequence of records. Each record is an 8-byte
big-endian length followed by a JSON header; the header's ``inline`` list
names the blob columns that follow, each again as an 8-byte big-endian length
and the raw bytes.
"""

from __future__ import annotations

import json
import struct
from typing import Any, Callable, Iterator

from .base import BlobHandle, RowRecord
from .checksum import format_checksum, parse_checksum

LENGTH = struct.Struct(">Q")

DURATION_HEADER = "X-Sim-Duration-Ms"
CHECKSUM_HEADER = "X-Checksum"
OCTET_STREAM = "application/octet-stream"
FRAMED_STREAM = "application/x-cloudshift-frames"

HTTP_STATUS = {
    "invalid": 400,
    "unauthorized": 401,
    "not_found": 404,
    "unknown_table": 404,
    "missing_row": 404,
    "missing_blob": 404,
    "conflict": 409,
    "size_cap": 413,
    "length": 422,
    "checksum_mismatch": 500,
    "store_error": 500,
}


def row_header(record: RowRecord, inline: list[str]) -> bytes:
    doc = {
        "key": record.key,
        "columns": record.columns,
        "blobs": {
            c: {"size": h.size_bytes, "checksum": format_checksum(h.checksum)} for c, h in record.blob_refs.items()
        },
        "inline": inline,
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def parse_row_header(table: str, raw: bytes) -> tuple[RowRecord, list[str]]:
    doc: dict[str, Any] = json.loads(raw)
    refs = {
        c: BlobHandle(table, doc["key"], c, e["size"], parse_checksum(e["checksum"])) for c, e in doc["blobs"].items()
    }
    return RowRecord(table, doc["key"], doc["columns"], refs), list(doc["inline"])


def read_exact(read: Callable[[int], bytes], n: int) -> bytes:
    parts = []
    remaining = n
    while remaining:
        chunk = read(remaining)
        if not chunk:
            raise EOFError(f"stream ended with {remaining} of {n} bytes outstanding")
        parts.append(chunk)
        remaining -= len(chunk)
    return b"".join(parts)


def read_frames(table: str, read: Callable[[int], bytes]) -> Iterator[RowRecord]:
    while True:
        prefix = read(LENGTH.size)
        if not prefix:
            return
        if len(prefix) < LENGTH.size:
            prefix += read_exact(read, LENGTH.size - len(prefix))
        (n,) = LENGTH.unpack(prefix)
        record, inline = parse_row_header(table, read_exact(read, n))
        for col in inline:
            (size,) = LENGTH.unpack(read_exact(read, LENGTH.size))
            record.blobs[col] = read_exact(read, size)
        yield record
