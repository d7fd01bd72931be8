"""Store connectors: local directory store, HTTP remote store, shaping and the simulator."""

from __future__ import annotations

import os

from ..clock import Clock
from .base import (
    DEFAULT_SIZE_CAP,
    Ack,
    BlobHandle,
    ChecksumMismatch,
    FetchQuery,
    InvalidRequest,
    KeyConflict,
    LengthViolation,
    MissingBlob,
    MissingRow,
    NotFound,
    RowRecord,
    SizeCapExceeded,
    StoreConnectionError,
    StoreEndpoint,
    StoreError,
    Unauthorized,
    UnknownTable,
)
from .checksum import Fnv1a64, fnv1a64
from .local import LocalStore
from .remote import HttpStore
from .server import SimulatorServer, serve
from .shaping import ShapedStore, ShapingProfile

TOKEN_ENV = "CLOUDSHIFT_TOKEN"


def connect(
    uri: str,
    *,
    token: str | None = None,
    clock: Clock | None = None,
    shaping: ShapingProfile | None = None,
    timeout: float = 30.0,
    seed: int = 0,
) -> StoreEndpoint:
    """Open ``local:<path>`` or ``http://host:port``.

    ``shaping`` applies client-side and only to local endpoints; remote
    endpoints are shaped by their server. The bearer token defaults to
    ``$CLOUDSHIFT_TOKEN``.
    """
    if uri.startswith("local:"):
        path = uri[len("local:"):]
        if not path:
            raise ValueError("local endpoint needs a path: local:<dir>")
        store: StoreEndpoint = LocalStore(path)
        if shaping is not None and not shaping.unlimited:
            if clock is None:
                raise ValueError("shaping a local endpoint needs a clock")
            store = ShapedStore(store, shaping, clock, seed)
        return store
    if uri.startswith("http://"):
        return HttpStore(uri, token if token is not None else os.environ.get(TOKEN_ENV), timeout=timeout, clock=clock)
    raise ValueError(f"unrecognised endpoint URI {uri!r} (expected local:<path> or http://host:port)")


__all__ = [
    "DEFAULT_SIZE_CAP", "Ack", "BlobHandle", "ChecksumMismatch", "FetchQuery", "Fnv1a64", "HttpStore",
    "InvalidRequest", "KeyConflict", "LengthViolation", "LocalStore", "MissingBlob", "MissingRow", "NotFound",
    "RowRecord", "ShapedStore", "ShapingProfile", "SimulatorServer", "SizeCapExceeded", "StoreConnectionError",
    "StoreEndpoint", "StoreError", "TOKEN_ENV", "Unauthorized", "UnknownTable", "connect", "fnv1a64", "serve",
]
