from __future__ import annotations

import io

from hypothesis import given
from hypothesis import strategies as st

from cloudshift.store.checksum import Fnv1a64, checksum_stream, fnv1a64, format_checksum, parse_checksum


def oracle(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def test_published_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


@given(st.binary(max_size=4096))
def test_matches_reference_loop(data):
    assert fnv1a64(data) == oracle(data)


@given(st.lists(st.binary(max_size=300), max_size=8))
def test_incremental_equals_one_shot(chunks):
    h = Fnv1a64()
    for c in chunks:
        h.update(c)
    assert h.intdigest() == fnv1a64(b"".join(chunks))


def test_stream_reports_size():
    data = bytes(range(256)) * 5000
    assert checksum_stream(io.BytesIO(data)) == (oracle(data), len(data))


@given(st.integers(0, (1 << 64) - 1))
def test_hex_round_trip(value):
    text = format_checksum(value)
    assert len(text) == 16
    assert parse_checksum(text) == value
