"""Paired baseline/orm benchmark runs and efficiency arithmetic."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .clock import Clock, WallClock
from .corpus import CorpusManifest, generate_corpus, items_from_manifest
from .engine import CATEGORIES, METHODS, MigrationPlan, SaveResult, execute, plan_migration
from .schema import ModelBundle
from .store.base import StoreEndpoint

log = logging.getLogger(__name__)

SUCCESS = "success"
FAILURE = "failure"


class UnpairedItemError(ValueError):
    pass


@dataclass(frozen=True)
class TimingRecord:
    item_id: str
    category: str
    method: str
    save_ms: int
    transfer_ms: int
    total_ms: int | None = None
    verified: bool = True

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.save_ms < 0 or self.transfer_ms < 0:
            raise ValueError(f"{self.item_id}: raw times must be non-negative")
        total = self.save_ms + self.transfer_ms
        if self.total_ms is None:
            object.__setattr__(self, "total_ms", total)
        elif self.total_ms != total:
            raise ValueError(f"{self.item_id}: total_ms {self.total_ms} != {self.save_ms} + {self.transfer_ms}")


@dataclass(frozen=True)
class EfficiencyRow:
    """Baseline minus orm, per item. ``failed`` marks items that did not migrate cleanly under either method."""

    item_id: str
    category: str
    save_eff_ms: int
    transfer_eff_ms: int
    total_eff_ms: int
    failed: bool = False

    def __post_init__(self) -> None:
        if self.total_eff_ms != self.save_eff_ms + self.transfer_eff_ms:
            raise ValueError(
                f"{self.item_id}: total {self.total_eff_ms} != save {self.save_eff_ms} + transfer {self.transfer_eff_ms}"
            )

    @classmethod
    def from_deltas(cls, item_id: str, category: str, save_eff_ms: int, transfer_eff_ms: int, failed: bool = False) -> "EfficiencyRow":
        return cls(item_id, category, save_eff_ms, transfer_eff_ms, save_eff_ms + transfer_eff_ms, failed)


@dataclass(frozen=True)
class CategoryCounts:
    success_count: int = 0
    failure_count: int = 0

    @property
    def items(self) -> int:
        return self.success_count + self.failure_count


@dataclass(frozen=True)
class AggregateReport:
    categories: dict[str, CategoryCounts]
    success_rate: float

    @property
    def success_count(self) -> int:
        return sum(c.success_count for c in self.categories.values())

    @property
    def items(self) -> int:
        return sum(c.items for c in self.categories.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "categories": {k: asdict(v) for k, v in self.categories.items()},
            "success_count": self.success_count,
            "items": self.items,
            "success_rate": self.success_rate,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "AggregateReport":
        cats = {k: CategoryCounts(v["success_count"], v["failure_count"]) for k, v in doc["categories"].items()}
        return cls(cats, doc["success_rate"])


@dataclass(frozen=True)
class OutlierFlag:
    item_id: str
    category: str
    field: str  # "save_ms" or "transfer_ms"
    baseline_ms: int
    orm_ms: int


def _pair(records: Iterable[TimingRecord]) -> list[tuple[TimingRecord, TimingRecord]]:
    slots: dict[tuple[str, str], dict[str, TimingRecord]] = {}
    order: list[tuple[str, str]] = []
    for r in records:
        k = (r.category, r.item_id)
        if k not in slots:
            slots[k] = {}
            order.append(k)
        if r.method in slots[k]:
            raise UnpairedItemError(f"duplicate {r.method} record for {r.category}/{r.item_id}")
        slots[k][r.method] = r
    pairs = []
    for k in order:
        missing = [m for m in METHODS if m not in slots[k]]
        if missing:
            raise UnpairedItemError(f"{k[0]}/{k[1]} has no {missing[0]} record")
        pairs.append((slots[k]["baseline"], slots[k]["orm"]))
    return pairs


def compute_efficiency(records: Iterable[TimingRecord]) -> list[EfficiencyRow]:
    rows = []
    for base, orm in _pair(records):
        rows.append(
            EfficiencyRow.from_deltas(
                base.item_id,
                base.category,
                base.save_ms - orm.save_ms,
                base.transfer_ms - orm.transfer_ms,
                failed=not (base.verified and orm.verified),
            )
        )
    return rows


def classify(row: EfficiencyRow) -> str:
    return SUCCESS if not row.failed and row.total_eff_ms > 0 else FAILURE


def aggregate(rows: Iterable[EfficiencyRow], categories: Sequence[str] = CATEGORIES) -> AggregateReport:
    """Success/failure counts per category. Listed categories are always present, even when empty."""
    counts: dict[str, list[int]] = {c: [0, 0] for c in categories}
    for row in rows:
        slot = counts.setdefault(row.category, [0, 0])
        slot[0 if classify(row) == SUCCESS else 1] += 1
    total = sum(s + f for s, f in counts.values())
    wins = sum(s for s, _ in counts.values())
    return AggregateReport({c: CategoryCounts(s, f) for c, (s, f) in counts.items()}, wins / total if total else 0.0)


def flag_outliers(records: Iterable[TimingRecord]) -> list[OutlierFlag]:
    """Pairs where a raw-time gap reaches twice the faster method's time."""
    flags = []
    for base, orm in _pair(records):
        for name in ("save_ms", "transfer_ms"):
            b, o = getattr(base, name), getattr(orm, name)
            gap = abs(b - o)
            if gap > 0 and gap >= 2 * min(b, o):
                flags.append(OutlierFlag(base.item_id, base.category, name, b, o))
    return flags


AfterSave = Callable[[MigrationPlan, SaveResult], None]


@dataclass
class BenchConfig:
    batch_size: int = 25
    strategy: str = "eager"
    entity: str | None = None
    methods: tuple[str, ...] = METHODS
    clock: Clock = field(default_factory=WallClock)


def run_benchmark(
    manifest: CorpusManifest,
    corpus_dir: str | Path,
    bundle: ModelBundle,
    source: StoreEndpoint,
    destination: StoreEndpoint,
    config: BenchConfig | None = None,
    *,
    after_save: dict[str, AfterSave] | None = None,
) -> list[TimingRecord]:
    """Migrate the corpus once per method, each time into freshly cleared tables.

    The baseline method always loads lazily; ``config.strategy`` applies to
    orm. ``after_save`` maps a method name to a hook run between its save and
    transfer phases.
    """
    cfg = config or BenchConfig()
    model, mapping, storage = bundle.conceptual, bundle.mapping, bundle.storage
    entity = model.entity(cfg.entity) if cfg.entity else model.entities[0]
    items = items_from_manifest(manifest, corpus_dir, entity)
    table = mapping.table_for(entity.name)
    records = []
    for method in cfg.methods:
        source.delete(table)
        destination.delete(table)
        plan = plan_migration(
            model,
            mapping,
            source,
            destination,
            storage=storage,
            method=method,
            strategy="lazy" if method == "baseline" else cfg.strategy,
            batch_size=cfg.batch_size,
            entity=entity.name,
            manifest=manifest,
            clock=cfg.clock,
        )
        result = execute(plan, items, after_save=(after_save or {}).get(method))
        for r in result.items:
            records.append(TimingRecord(r.key, manifest.category, method, r.save_ms, r.transfer_ms, verified=r.verified))
        log.info("%s %s: %s", manifest.category, method, result.totals)
    return records


@dataclass
class SuiteResult:
    records: list[TimingRecord]
    rows: dict[str, list[EfficiencyRow]]
    manifests: dict[str, CorpusManifest]

    @property
    def report(self) -> AggregateReport:
        return aggregate([r for rows in self.rows.values() for r in rows])


def run_suite(
    corpus_dir: str | Path,
    bundle: ModelBundle,
    source: StoreEndpoint,
    destination: StoreEndpoint,
    *,
    categories: Sequence[str] = CATEGORIES,
    count: int = 100,
    seed: int = 0,
    size_min: int | None = None,
    size_max: int | None = None,
    config: BenchConfig | None = None,
) -> SuiteResult:
    """Generate each category's corpus and benchmark it against the same pair of endpoints."""
    out = SuiteResult([], {}, {})
    for cat in categories:
        manifest = generate_corpus(corpus_dir, cat, count, size_min, size_max, seed)
        records = run_benchmark(manifest, corpus_dir, bundle, source, destination, config)
        out.manifests[cat] = manifest
        out.records.extend(records)
        out.rows[cat] = compute_efficiency(records)
    return out
