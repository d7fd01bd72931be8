"""End-to-end acceptance checks.

The full desk benchmark (4 categories x 100 files, 100 KiB to 8 MiB) runs once
per module through two simulator servers in virtual-clock mode with 20 ms
per-request latency and no jitter.
"""

from __future__ import annotations

import csv
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest
from seeded import ORG_DOC, seeded_corpus

from cloudshift.bench import FAILURE, SUCCESS, BenchConfig, EfficiencyRow, aggregate, classify, compute_efficiency, run_benchmark, run_suite
from cloudshift.clock import VirtualClock
from cloudshift.corpus import generate_corpus
from cloudshift.engine import CATEGORIES, MigrationItem, plan_migration, save_phase, transfer_phase
from cloudshift.report import CSV_COLUMNS, emit
from cloudshift.schema import build_model, derive_default_mapping, load_model, storage_from_conceptual
from cloudshift.store import LocalStore, ShapingProfile, SimulatorServer, connect
from cloudshift.validation import CHECKS, run_all

LATENCY_MS = 20
COUNT = 100
SEED = 7
TIME_BUDGET_S = 600


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    clock = VirtualClock()
    shaping = ShapingProfile(LATENCY_MS, None, 0)
    bundle = load_model("personnel")
    t0 = time.perf_counter()
    with SimulatorServer(root / "source", shaping, clock_mode="virtual") as src, SimulatorServer(
        root / "dest", shaping, clock_mode="virtual", seed=1
    ) as dst:
        suite = run_suite(
            root / "corpus",
            bundle,
            connect(src.url, clock=clock),
            connect(dst.url, clock=clock),
            count=COUNT,
            seed=SEED,
            config=BenchConfig(batch_size=25, strategy="eager", clock=clock),
        )
    elapsed = time.perf_counter() - t0
    emit(root / "report", suite.rows, suite.report)
    return suite, elapsed, root / "report"


@pytest.mark.criterion(1, "additivity: every EfficiencyRow has total = save + transfer (4 x 100 run)")
def test_additivity_identity(desk_run):
    suite, _, _ = desk_run
    rows = [r for rows in suite.rows.values() for r in rows]
    assert len(rows) == len(CATEGORIES) * COUNT
    assert all(isinstance(r.total_eff_ms, int) for r in rows)
    assert all(r.total_eff_ms == r.save_eff_ms + r.transfer_eff_ms for r in rows)
    assert all(t.total_ms == t.save_ms + t.transfer_ms for t in suite.records)


@pytest.mark.criterion(2, "round-trip fidelity: all items verify; one seeded corruption is a failed case")
def test_round_trip_fidelity(desk_run, tmp_path):
    suite, _, _ = desk_run
    assert len(suite.records) == 2 * len(CATEGORIES) * COUNT
    assert all(r.verified for r in suite.records)

    bundle = load_model("personnel")
    manifest = generate_corpus(tmp_path / "corpus", "image_small", 10, 1000, 5000, seed=SEED)
    clock = VirtualClock()
    with SimulatorServer(tmp_path / "s", ShapingProfile(LATENCY_MS), clock_mode="virtual") as src, SimulatorServer(
        tmp_path / "d", ShapingProfile(LATENCY_MS), clock_mode="virtual"
    ) as dst:
        victim = manifest.files[3].id

        def corrupt(plan, saved):
            blob = tmp_path / "s" / "Personnel" / victim / "Picture.blob"
            data = bytearray(blob.read_bytes())
            data[len(data) // 2] ^= 0x40
            blob.write_bytes(bytes(data))

        records = run_benchmark(
            manifest,
            tmp_path / "corpus",
            bundle,
            connect(src.url, clock=clock),
            connect(dst.url, clock=clock),
            BenchConfig(batch_size=5, clock=clock),
            after_save={"orm": corrupt},
        )
    rows = {r.item_id: r for r in compute_efficiency(records)}
    assert [k for k, r in rows.items() if r.failed] == [victim]
    assert classify(rows[victim]) == FAILURE
    assert sum(1 for r in records if r.method == "orm" and r.verified) == 9


@pytest.mark.criterion(3, "fetch counts over N=10, B=2, batch 10: eager 1, explicit 2, lazy 21")
@pytest.mark.parametrize("strategy, expected", [("eager", 1), ("explicit", 2), ("lazy", 21)])
def test_loading_strategy_fetch_counts(tmp_path, strategy, expected):
    bundle = load_model("personnel")
    src, dst = LocalStore(tmp_path / "s"), LocalStore(tmp_path / "d")
    plan = plan_migration(
        bundle.conceptual, bundle.mapping, src, dst, storage=bundle.storage, strategy=strategy, batch_size=10
    )
    items = [MigrationItem(f"P{i}", {"City": "Hefei"}, {"Picture": bytes([i]) * 512, "TextFile": b"txt" * i}) for i in range(10)]
    save_phase(items, plan)
    assert len(plan.strategy.columns) == (2 if strategy == "explicit" else 0)
    before = src.fetch_counter
    result = transfer_phase(plan, [i.key for i in items])
    assert src.fetch_counter - before == expected
    assert all(r.verified for r in result.items)


@pytest.mark.criterion(4, "orm beats baseline on >= 80% of items per category at 20 ms latency; run < 10 min")
def test_method_contrast_under_shaping(desk_run):
    suite, elapsed, _ = desk_run
    by_item: dict[tuple[str, str], dict[str, int]] = {}
    for r in suite.records:
        by_item.setdefault((r.category, r.item_id), {})[r.method] = r.total_ms
    for cat in CATEGORIES:
        pairs = [v for (c, _), v in by_item.items() if c == cat]
        assert len(pairs) == COUNT
        wins = sum(1 for v in pairs if v["orm"] < v["baseline"])
        assert wins / len(pairs) >= 0.80, f"{cat}: orm faster on {wins}/{len(pairs)}"
    assert elapsed < TIME_BUDGET_S


@pytest.mark.criterion(5, "aggregate self-test: 80 positive / 20 non-positive gives success_rate 0.80 exactly")
def test_aggregate_self_test():
    deltas = [1 + k for k in range(80)] + [0] * 7 + [-(1 + k) for k in range(13)]
    rows = [EfficiencyRow.from_deltas(f"i{k:03d}", CATEGORIES[k % 4], d, 0) for k, d in enumerate(deltas)]
    report = aggregate(rows)
    assert report.success_rate == 0.80
    assert sum(1 for r in rows if classify(r) == SUCCESS) == 80


@pytest.mark.criterion(6, "validation: 5 seeded faults give exactly 5 violations, one per check")
def test_validation_detection():
    model = build_model(ORG_DOC)
    storage = storage_from_conceptual(model)
    records, expected = seeded_corpus()
    report = run_all(records, model, derive_default_mapping(model, storage), storage)
    assert len(report.violations) == 5
    assert {v.record_key: v.check for v in report.violations} == expected
    assert sorted(expected.values()) == sorted(CHECKS)


@pytest.mark.criterion(7, "corpus determinism: identical inputs give byte-identical manifests")
@pytest.mark.parametrize("category", CATEGORIES)
def test_corpus_determinism(tmp_path, category):
    small = category.endswith("small")
    lo, hi = (100 * 1024, 900 * 1024) if small else (1 << 20, 2 << 20)
    a = generate_corpus(tmp_path / "a", category, 20 if small else 5, lo, hi, seed=SEED)
    b = generate_corpus(tmp_path / "b", category, 20 if small else 5, lo, hi, seed=SEED)
    assert (tmp_path / "a" / category / "manifest.json").read_bytes() == (tmp_path / "b" / category / "manifest.json").read_bytes()
    assert a == b


@pytest.mark.criterion(8, "report shape: CSV columns item_id, STE, TTE, TTTE; chart has 4 categories x success/failure")
def test_report_shape(desk_run):
    _, _, out = desk_run
    for cat in CATEGORIES:
        with open(Path(out) / f"efficiency_{cat}.csv", newline="") as fh:
            reader = csv.reader(fh)
            assert tuple(next(reader)) == CSV_COLUMNS == ("item_id", "STE", "TTE", "TTTE")
            assert sum(1 for _ in reader) == COUNT
    svg = ET.parse(Path(out) / "aggregate.svg").getroot()
    bars = {
        (r.get("data-category"), r.get("data-outcome"))
        for r in svg.iter("{http://www.w3.org/2000/svg}rect")
        if r.get("data-category")
    }
    assert bars == {(c, o) for c in CATEGORIES for o in ("success", "failure")}
