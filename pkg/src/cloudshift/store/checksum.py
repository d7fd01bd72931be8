"""64-bit FNV-1a content hashing, streamed over byte chunks."""

from __future__ import annotations

from typing import BinaryIO

import numpy as np
from numba import njit

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
CHUNK_SIZE = 1 << 20


@njit(cache=True, nogil=True)
def _fnv1a64_update(state: np.ndarray, data: np.ndarray) -> None:
    h = state[0]
    prime = np.uint64(FNV_PRIME)
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * prime
    state[0] = h


class Fnv1a64:
    """Incremental FNV-1a (64-bit); mirrors the ``hashlib`` update/digest shape."""

    __slots__ = ("_state",)

    def __init__(self, data: bytes = b"") -> None:
        # one-element array so the compiled loop never round-trips through a Python int
        self._state = np.array([FNV_OFFSET_BASIS], dtype=np.uint64)
        if data:
            self.update(data)

    def update(self, data: bytes | bytearray | memoryview) -> None:
        if len(data):
            _fnv1a64_update(self._state, np.frombuffer(data, dtype=np.uint8))

    def intdigest(self) -> int:
        return int(self._state[0])

    def hexdigest(self) -> str:
        return format_checksum(self.intdigest())


def fnv1a64(data: bytes | bytearray | memoryview) -> int:
    return Fnv1a64(data).intdigest()


def checksum_stream(fh: BinaryIO) -> tuple[int, int]:
    """Hash a binary stream to EOF; returns ``(checksum, size_bytes)``."""
    h = Fnv1a64()
    size = 0
    while chunk := fh.read(CHUNK_SIZE):
        h.update(chunk)
        size += len(chunk)
    return h.intdigest(), size


def format_checksum(value: int) -> str:
    return f"{value:016x}"


def parse_checksum(text: str) -> int:
    value = int(text, 16)
    if not 0 <= value < 1 << 64:
        raise ValueError(f"checksum out of 64-bit range: {text!r}")
    return value
