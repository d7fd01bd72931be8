"""Per-request latency and bandwidth shaping."""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass
from typing import Iterable

from ..clock import Clock
from .base import Ack, BlobData, BlobHandle, FetchQuery, RowRecord, StoreEndpoint


@dataclass(frozen=True)
class ShapingProfile:
    per_request_latency_ms: float = 0.0
    bandwidth_bytes_per_sec: float | None = None  # None = unlimited
    jitter_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.per_request_latency_ms < 0:
            raise ValueError("latency must be nonnegative")
        if self.jitter_ms < 0:
            raise ValueError("jitter must be nonnegative")
        if self.bandwidth_bytes_per_sec is not None and self.bandwidth_bytes_per_sec <= 0:
            raise ValueError("bandwidth must be positive (or None for unlimited)")

    @property
    def unlimited(self) -> bool:
        return self.per_request_latency_ms == 0 and self.jitter_ms == 0 and self.bandwidth_bytes_per_sec is None

    def transfer_ms(self, nbytes: int) -> float:
        if self.bandwidth_bytes_per_sec is None or nbytes <= 0:
            return 0.0
        return nbytes * 1000.0 / self.bandwidth_bytes_per_sec


class Shaper:
    """Draws per-request delays from a profile; jitter comes from a seeded RNG."""

    def __init__(self, profile: ShapingProfile, seed: int = 0) -> None:
        self.profile = profile
        self._rng = random.Random(seed)
        self._lock = threading.Lock()

    def latency_ms(self) -> float:
        jitter = 0.0
        if self.profile.jitter_ms:
            with self._lock:
                jitter = self._rng.uniform(0.0, self.profile.jitter_ms)
        return self.profile.per_request_latency_ms + jitter

    def request_ms(self, blob_bytes: int = 0) -> float:
        return self.latency_ms() + self.profile.transfer_ms(blob_bytes)


def _blob_len(data: BlobData, size: int | None) -> int:
    if isinstance(data, (bytes, bytearray, memoryview)):
        return len(data)
    return size or 0


class ShapedStore(StoreEndpoint):
    """Applies a shaping profile client-side around another connector.

    With a wall clock the delay is slept; with a virtual clock it is charged
    to the clock, so timings become a pure function of the request pattern.
    Counters are the wrapped connector's.
    """

    def __init__(self, inner: StoreEndpoint, profile: ShapingProfile, clock: Clock, seed: int = 0) -> None:
        super().__init__(inner.location, inner.credentials)
        self.inner = inner
        self.kind = inner.kind
        self.shaper = Shaper(profile, seed)
        self.clock = clock

    @property
    def fetch_counter(self) -> int:
        return self.inner.fetch_counter

    @property
    def put_counter(self) -> int:
        return self.inner.put_counter

    @property
    def uri(self) -> str:
        return self.inner.uri

    def _delay(self, blob_bytes: int = 0) -> None:
        self.clock.charge(self.shaper.request_ms(blob_bytes))

    def ping(self) -> None:
        self.inner.ping()

    def put_row(self, row: RowRecord, *, overwrite: bool = False, merge: bool = False) -> Ack:
        self._delay()
        return self.inner.put_row(row, overwrite=overwrite, merge=merge)

    def put_rows(self, table: str, rows: Iterable[RowRecord], *, overwrite: bool = False) -> list[Ack]:
        self._delay()
        return self.inner.put_rows(table, rows, overwrite=overwrite)

    def put_blob(
        self, table: str, key: str, column: str, data: BlobData, *, size: int | None = None, overwrite: bool = False
    ) -> BlobHandle:
        self._delay(_blob_len(data, size))
        return self.inner.put_blob(table, key, column, data, size=size, overwrite=overwrite)

    def fetch(self, query: FetchQuery) -> list[RowRecord]:
        rows = self.inner.fetch(query)
        self._delay(sum(len(b) for r in rows for b in r.blobs.values()))
        return rows

    def fetch_blob(self, handle: BlobHandle) -> bytes:
        data = self.inner.fetch_blob(handle)
        self._delay(len(data))
        return data

    def delete(self, table: str, key: str | None = None, column: str | None = None) -> None:
        self.inner.delete(table, key, column)

    def list_tables(self) -> list[str]:
        return self.inner.list_tables()

    def close(self) -> None:
        self.inner.close()
