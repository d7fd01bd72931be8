from __future__ import annotations

import struct
import zlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cloudshift.bench import (
    FAILURE,
    SUCCESS,
    BenchConfig,
    EfficiencyRow,
    TimingRecord,
    UnpairedItemError,
    aggregate,
    classify,
    compute_efficiency,
    flag_outliers,
    run_benchmark,
)
from cloudshift.clock import VirtualClock
from cloudshift.corpus import PNG_SIGNATURE, CorpusError, generate_corpus, load_manifest
from cloudshift.engine import CATEGORIES
from cloudshift.store import LocalStore, ShapedStore, ShapingProfile
from cloudshift.store.checksum import fnv1a64

KB, MB = 1024, 1024 * 1024


def pair(item, save_b, transfer_b, save_o, transfer_o, category="image_large", verified=True):
    return [
        TimingRecord(item, category, "baseline", save_b, transfer_b),
        TimingRecord(item, category, "orm", save_o, transfer_o, verified=verified),
    ]


def rows_with_deltas(deltas, category="image_large"):
    return [EfficiencyRow.from_deltas(f"i{k}", category, d, 0) for k, d in enumerate(deltas)]


# -- efficiency arithmetic ----------------------------------------------------------

# (STE, TTE, TTTE) rows whose published totals are additive
PUBLISHED = [
    (6478, 13048, 19526),  # image GB row 1
    (-994, 1557, 563),  # image GB row 2
    (-74, -508, -582),  # image KB row 1
    (-167, 427, 260),  # file KB row 1
]


@pytest.mark.parametrize("ste, tte, ttte", PUBLISHED)
def test_published_rows_are_reproduced(ste, tte, ttte):
    # choose raw times whose differences are the published deltas
    base_save, base_transfer = 20000, 20000
    records = pair("x", base_save, base_transfer, base_save - ste, base_transfer - tte)
    (row,) = compute_efficiency(records)
    assert (row.save_eff_ms, row.transfer_eff_ms, row.total_eff_ms) == (ste, tte, ttte)


def test_non_additive_published_row_cannot_be_emitted():
    # image GB row 5: -269 + 11171 is not 3153
    with pytest.raises(ValueError, match="total"):
        EfficiencyRow("x", "image_large", -269, 11171, 3153)


def test_identity_case_is_all_zero():
    (row,) = compute_efficiency(pair("x", 40, 70, 40, 70))
    assert (row.save_eff_ms, row.transfer_eff_ms, row.total_eff_ms) == (0, 0, 0)


def test_unpaired_item():
    with pytest.raises(UnpairedItemError):
        compute_efficiency([TimingRecord("x", "text_small", "baseline", 1, 1)])


def test_raw_times_cannot_be_negative():
    with pytest.raises(ValueError):
        TimingRecord("x", "text_small", "orm", -1, 5)


@given(st.lists(st.tuples(*[st.integers(0, 10**7)] * 4), max_size=40))
def test_additivity_always_holds(raw):
    records = [r for k, t in enumerate(raw) for r in pair(f"i{k}", *t)]
    for rec in records:
        assert rec.total_ms == rec.save_ms + rec.transfer_ms
    for row in compute_efficiency(records):
        assert row.total_eff_ms == row.save_eff_ms + row.transfer_eff_ms


# -- classification and aggregation -------------------------------------------------


@pytest.mark.parametrize("total, outcome", [(563, SUCCESS), (-582, FAILURE), (0, FAILURE), (1, SUCCESS)])
def test_classify(total, outcome):
    assert classify(EfficiencyRow.from_deltas("x", "text_small", total, 0)) == outcome


def test_unverified_item_is_a_failure_whatever_its_timing():
    (row,) = compute_efficiency(pair("x", 500, 500, 1, 1, verified=False))
    assert row.total_eff_ms > 0 and classify(row) == FAILURE


def test_eighty_of_hundred():
    rows = rows_with_deltas([5] * 80 + [0] * 10 + [-3] * 10)
    report = aggregate(rows)
    assert report.success_rate == 0.80
    assert report.categories["image_large"].success_count == 80
    assert report.categories["image_large"].failure_count == 20


def test_all_positive():
    assert aggregate(rows_with_deltas([1] * 7)).success_rate == 1.0


def test_empty_aggregate():
    report = aggregate([])
    assert report.success_rate == 0
    assert list(report.categories) == list(CATEGORIES)
    assert all(c.items == 0 for c in report.categories.values())


@given(st.dictionaries(st.sampled_from(CATEGORIES), st.lists(st.integers(-100, 100), max_size=30)))
def test_rate_is_count_ratio(deltas):
    rows = [r for cat, ds in deltas.items() for r in rows_with_deltas(ds, cat)]
    report = aggregate(rows)
    wins = sum(1 for r in rows if r.total_eff_ms > 0)
    assert 0 <= report.success_rate <= 1
    assert report.success_rate == (wins / len(rows) if rows else 0)
    for cat in CATEGORIES:
        assert report.categories[cat].items == len(deltas.get(cat, []))


def test_outlier_threshold():
    (flag,) = flag_outliers(pair("x", 300, 100, 6778, 100))
    assert (flag.field, flag.baseline_ms, flag.orm_ms) == ("save_ms", 300, 6778)
    assert flag_outliers(pair("y", 300, 100, 300, 100)) == []
    assert flag_outliers([]) == []
    # a gap just under twice the faster time is not flagged
    assert flag_outliers(pair("z", 100, 100, 299, 100)) == []
    assert len(flag_outliers(pair("z", 100, 100, 300, 100))) == 1


# -- corpus ---------------------------------------------------------------------------


def test_corpus_is_reproducible(tmp_path):
    a = generate_corpus(tmp_path / "a", "text_small", 100, 100 * KB, 900 * KB, seed=7)
    b = generate_corpus(tmp_path / "b", "text_small", 100, 100 * KB, 900 * KB, seed=7)
    assert a.to_json() == b.to_json()
    assert (tmp_path / "a/text_small/manifest.json").read_bytes() == (tmp_path / "b/text_small/manifest.json").read_bytes()
    assert all(100 * KB <= f.size <= 900 * KB for f in a.files)
    c = generate_corpus(tmp_path / "c", "text_small", 100, 100 * KB, 900 * KB, seed=8)
    assert c.to_json() != a.to_json()


def test_text_files_are_printable(tmp_path):
    m = generate_corpus(tmp_path, "text_small", 3, 1000, 5000, seed=1)
    for f in m.files:
        data = m.path_for(tmp_path, f.id).read_bytes()
        assert all(32 <= b < 127 or b == 10 for b in data)
        assert fnv1a64(data) == f.checksum and len(data) == f.size


def test_image_files_have_png_header(tmp_path):
    m = generate_corpus(tmp_path, "image_large", 10, 1 * MB, 8 * MB, seed=7)
    for f in m.files:
        data = m.path_for(tmp_path, f.id).read_bytes()
        assert data.startswith(PNG_SIGNATURE)
        length, kind = struct.unpack(">I4s", data[8:16])
        assert (length, kind) == (13, b"IHDR")
        assert struct.unpack(">I", data[29:33])[0] == zlib.crc32(data[12:29])
        assert data.endswith(b"IEND\xaeB`\x82")
        assert 1 * MB <= len(data) <= 8 * MB


def test_manifest_reload(tmp_path):
    m = generate_corpus(tmp_path, "image_small", 4, 200, 400, seed=2)
    assert load_manifest(tmp_path, "image_small") == m


@pytest.mark.parametrize("count, lo, hi", [(0, 10, 20), (3, 20, 10)])
def test_bad_corpus_arguments(tmp_path, count, lo, hi):
    with pytest.raises(CorpusError):
        generate_corpus(tmp_path, "text_small", count, lo, hi)


# -- benchmark runs -------------------------------------------------------------------


def shaped_pair(root, latency, clock):
    shape = ShapingProfile(latency)
    return ShapedStore(LocalStore(root / "s"), shape, clock), ShapedStore(LocalStore(root / "d"), shape, clock)


def test_ten_items_give_ten_pairs(tmp_path, personnel):
    m = generate_corpus(tmp_path / "corpus", "text_small", 10, 1000, 4000, seed=3)
    clock = VirtualClock()
    records = run_benchmark(m, tmp_path / "corpus", personnel, *shaped_pair(tmp_path, 20, clock), BenchConfig(clock=clock))
    assert len(records) == 20
    assert sorted(r.method for r in records) == ["baseline"] * 10 + ["orm"] * 10
    assert len(compute_efficiency(records)) == 10
    assert all(r.verified for r in records)


def test_orm_median_beats_baseline_under_latency(tmp_path, personnel):
    m = generate_corpus(tmp_path / "corpus", "image_small", 12, 1000, 4000, seed=3)
    clock = VirtualClock()
    records = run_benchmark(m, tmp_path / "corpus", personnel, *shaped_pair(tmp_path, 20, clock), BenchConfig(clock=clock))

    def median(method):
        xs = sorted(r.total_ms for r in records if r.method == method)
        return xs[len(xs) // 2]

    assert median("orm") < median("baseline")


def test_runs_are_deterministic_in_virtual_time(tmp_path, personnel):
    outcomes = []
    for run in ("a", "b"):
        m = generate_corpus(tmp_path / run / "corpus", "text_large", 6, 2000, 9000, seed=5)
        clock = VirtualClock()
        stores = shaped_pair(tmp_path / run, 20, clock)
        records = run_benchmark(m, tmp_path / run / "corpus", personnel, *stores, BenchConfig(batch_size=4, clock=clock))
        outcomes.append([(r.item_id, r.save_eff_ms, r.transfer_eff_ms, classify(r)) for r in compute_efficiency(records)])
    assert outcomes[0] == outcomes[1]
