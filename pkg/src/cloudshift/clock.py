"""Millisecond clocks used for all save/transfer timing."""

from __future__ import annotations

import threading
import time


class WallClock:
    virtual = False

    def now_ms(self) -> float:
        return time.perf_counter_ns() / 1e6

    def charge(self, ms: float) -> None:
        if ms > 0:
            time.sleep(ms / 1000.0)


class VirtualClock:
    """Deterministic clock that only moves when simulated request costs are charged to it."""

    virtual = True

    def __init__(self, start_ms: float = 0.0) -> None:
        self._now = start_ms
        self._lock = threading.Lock()

    def now_ms(self) -> float:
        with self._lock:
            return self._now

    def charge(self, ms: float) -> None:
        if ms < 0:
            raise ValueError("cannot charge negative time")
        with self._lock:
            self._now += ms


Clock = WallClock | VirtualClock


def make_clock(mode: str) -> Clock:
    if mode == "wall":
        return WallClock()
    if mode == "virtual":
        return VirtualClock()
    raise ValueError(f"unknown clock mode {mode!r}")
