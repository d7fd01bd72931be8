"""Migration planning and execution.

Two write methods are compared:

* ``baseline`` -- column-wise: one put per column value per row, rows moved
  one at a time with lazy loading.
* ``orm`` -- mapped rows: one batched row put per batch plus one put per
  blob present, with lazy, explicit or eager loading from the source.

Source fetch patterns over N rows, batch size b and B blob columns present:
eager issues ceil(N/b) fetches, explicit ceil(N/b) * (1 + 1) (rows, then the
loaded column set), lazy ceil(N/b) + N*B.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .clock import Clock, WallClock
from .schema import ConceptualModel, EntityDef, MappingSpec, MappingViolation, StorageModel, validate_mapping
from .store.base import (
    DEFAULT_SIZE_CAP,
    BlobHandle,
    FetchQuery,
    RowRecord,
    SizeCapExceeded,
    StoreEndpoint,
    StoreError,
)

log = logging.getLogger(__name__)

METHODS = ("baseline", "orm")
STRATEGIES = ("lazy", "explicit", "eager")
CATEGORIES = ("image_large", "image_small", "text_large", "text_small")


class PlanError(ValueError):
    def __init__(self, message: str, violations: Sequence[MappingViolation] = ()) -> None:
        super().__init__(message)
        self.violations = list(violations)


@dataclass(frozen=True)
class LoadingStrategy:
    kind: str
    columns: frozenset[str] = frozenset()  # explicit: blob columns loaded together in one fetch

    def __post_init__(self) -> None:
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown loading strategy {self.kind!r}")
        object.__setattr__(self, "columns", frozenset(self.columns))
        if self.columns and self.kind != "explicit":
            raise ValueError("only explicit loading takes a column set")


@dataclass(frozen=True)
class MigrationItem:
    """One unit of migration: scalar property values plus blob payloads (bytes or file paths)."""

    key: str
    scalars: dict[str, Any] = field(default_factory=dict)
    blobs: dict[str, bytes | Path] = field(default_factory=dict)

    def blob_size(self, prop: str) -> int:
        data = self.blobs[prop]
        return len(data) if isinstance(data, (bytes, bytearray)) else Path(data).stat().st_size

    @property
    def size_bytes(self) -> int:
        return sum(self.blob_size(p) for p in self.blobs)


@dataclass
class MigrationPlan:
    source: StoreEndpoint
    destination: StoreEndpoint
    model: ConceptualModel
    entity: str
    mapping: MappingSpec
    strategy: LoadingStrategy
    method: str
    batch_size: int = 1
    category: str | None = None
    size_cap_bytes: int = DEFAULT_SIZE_CAP
    clock: Clock = field(default_factory=WallClock)
    parallel: int = 1
    verify_sample_every: int = 10
    dest_mapping: MappingSpec | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise PlanError(f"unknown method {self.method!r}")
        if self.batch_size < 1:
            raise PlanError("batch_size must be >= 1")
        if self.method == "baseline":
            if self.strategy.kind != "lazy":
                raise PlanError("baseline method only supports lazy loading")
            self.batch_size = 1
        if self.category is not None and self.category not in CATEGORIES:
            raise PlanError(f"unknown category {self.category!r}")
        if self.parallel < 1:
            raise PlanError("parallel must be >= 1")
        if self.parallel > 1 and self.clock.virtual:
            raise PlanError("parallel transfer needs a wall clock; virtual time is shared across threads")
        entity = self.model.entity(self.entity)
        blob_cols = {p.name for p in entity.blob_properties}
        if not self.strategy.columns <= blob_cols:
            raise PlanError(f"explicit columns {sorted(self.strategy.columns - blob_cols)} are not blob properties")

    @property
    def entity_def(self) -> EntityDef:
        return self.model.entity(self.entity)

    @property
    def target_mapping(self) -> MappingSpec:
        return self.dest_mapping or self.mapping


@dataclass
class ItemResult:
    key: str
    bytes_moved: int = 0
    save_ms: int = 0
    transfer_ms: int = 0
    verify_ms: int = 0
    verified: bool = False
    error: str | None = None


@dataclass
class MigrationResult:
    method: str
    strategy: str
    batch_size: int
    items: list[ItemResult] = field(default_factory=list)
    source_fetches: int = 0
    dest_puts: int = 0

    @property
    def totals(self) -> dict[str, int]:
        return {
            "items": len(self.items),
            "bytes_moved": sum(i.bytes_moved for i in self.items),
            "save_ms": sum(i.save_ms for i in self.items),
            "transfer_ms": sum(i.transfer_ms for i in self.items),
            "verify_ms": sum(i.verify_ms for i in self.items),
            "verified": sum(1 for i in self.items if i.verified),
            "failed": sum(1 for i in self.items if not i.verified),
        }

    @property
    def failed(self) -> list[ItemResult]:
        return [i for i in self.items if not i.verified]

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "strategy": self.strategy,
            "batch_size": self.batch_size,
            "source_fetches": self.source_fetches,
            "dest_puts": self.dest_puts,
            "totals": self.totals,
            "items": [asdict(i) for i in self.items],
        }


@dataclass
class SaveResult:
    save_ms: dict[str, int] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)


def split_ms(total_ms: int, n: int) -> list[int]:
    """Split an integer duration into ``n`` near-equal integer shares that sum exactly to it."""
    if n <= 0:
        return []
    base, rem = divmod(total_ms, n)
    return [base + (1 if i < rem else 0) for i in range(n)]


def batches(seq: Sequence[Any], size: int) -> list[Sequence[Any]]:
    return [seq[i : i + size] for i in range(0, len(seq), size)]


def plan_migration(
    model: ConceptualModel,
    mapping: MappingSpec,
    source: StoreEndpoint,
    destination: StoreEndpoint,
    *,
    storage: StorageModel,
    method: str = "orm",
    strategy: str | LoadingStrategy = "eager",
    batch_size: int = 25,
    entity: str | None = None,
    category: str | None = None,
    manifest: Any = None,
    explicit_columns: Iterable[str] | None = None,
    **options: Any,
) -> MigrationPlan:
    """Check the mapping and endpoints, then assemble a :class:`MigrationPlan`.

    ``manifest`` (anything with a ``category`` attribute) supplies the
    category when it is not given. Remaining options go to the plan.
    """
    violations = validate_mapping(mapping, model, storage)
    if violations:
        raise PlanError(f"mapping has {len(violations)} violation(s)", violations)
    if entity is None:
        if len(model.entities) != 1:
            raise PlanError("model has several entities; name the one to migrate")
        entity = model.entities[0].name
    if model.get(entity) is None:
        raise PlanError(f"unknown entity {entity!r}")
    if isinstance(strategy, str):
        cols: frozenset[str] = frozenset()
        if strategy == "explicit":
            cols = frozenset(explicit_columns) if explicit_columns is not None else frozenset(
                p.name for p in model.entity(entity).blob_properties
            )
        strategy = LoadingStrategy(strategy, cols)
    if method == "baseline" and strategy.kind != "lazy":
        raise PlanError("baseline method only supports lazy loading")
    if category is None and manifest is not None:
        category = manifest.category
    source.ping()
    destination.ping()
    return MigrationPlan(
        source=source,
        destination=destination,
        model=model,
        entity=entity,
        mapping=mapping,
        strategy=strategy,
        method=method,
        batch_size=batch_size,
        category=category,
        **options,
    )


# ---------------------------------------------------------------------------
# write patterns
# ---------------------------------------------------------------------------


@dataclass
class _Row:
    """A row in flight: target-side columns plus blob payloads keyed by target column."""

    key: str
    columns: dict[str, Any]
    blobs: dict[str, bytes | Path]
    blob_order: list[str]


def _put_blob(store: StoreEndpoint, table: str, key: str, column: str, data: bytes | Path) -> BlobHandle:
    if isinstance(data, (bytes, bytearray)):
        return store.put_blob(table, key, column, data, overwrite=True)
    size = Path(data).stat().st_size
    with open(data, "rb") as fh:
        return store.put_blob(table, key, column, fh, size=size, overwrite=True)


def _write_columnwise(store: StoreEndpoint, table: str, key_column: str, column_order: list[str], row: _Row) -> dict[str, BlobHandle]:
    store.put_row(RowRecord(table, row.key, {key_column: row.columns[key_column]}), overwrite=True)
    handles = {}
    for col in column_order:
        if col == key_column:
            continue
        if col in row.blob_order:
            if col in row.blobs:
                handles[col] = _put_blob(store, table, row.key, col, row.blobs[col])
            else:
                store.put_row(RowRecord(table, row.key, {col: None}), merge=True)
        else:
            store.put_row(RowRecord(table, row.key, {col: row.columns.get(col)}), merge=True)
    return handles


def _write_rows(store: StoreEndpoint, table: str, rows: list[_Row]) -> None:
    store.put_rows(table, [RowRecord(table, r.key, dict(r.columns)) for r in rows], overwrite=True)


def _write_blobs(store: StoreEndpoint, table: str, row: _Row) -> dict[str, BlobHandle]:
    return {col: _put_blob(store, table, row.key, col, row.blobs[col]) for col in row.blob_order if col in row.blobs}


class _Timer:
    def __init__(self, clock: Clock) -> None:
        self.clock = clock
        self.elapsed = 0.0

    def __enter__(self) -> "_Timer":
        self._t0 = self.clock.now_ms()
        return self

    def __exit__(self, *exc: object) -> None:
        self.elapsed += self.clock.now_ms() - self._t0


def _ms(value: float) -> int:
    return max(0, int(round(value)))


# ---------------------------------------------------------------------------
# phases
# ---------------------------------------------------------------------------


def _source_row(plan: MigrationPlan, item: MigrationItem, counter: list[int]) -> _Row:
    entity = plan.entity_def
    m = plan.mapping
    columns: dict[str, Any] = {}
    for p in entity.scalar_properties:
        value = item.scalars.get(p.name)
        if value is None and p.generated:
            counter[0] += 1
            value = counter[0] if p.kind == "integer" else f"{item.key}-{counter[0]}"
        if p.is_key:
            value = item.key if value is None else value
        if value is not None:
            columns[m.column_for(entity.name, p.name)] = value
    blobs = {m.column_for(entity.name, prop): data for prop, data in item.blobs.items()}
    order = [m.column_for(entity.name, p.name) for p in entity.blob_properties]
    return _Row(item.key, columns, blobs, order)


def _column_order(mapping: MappingSpec, entity: EntityDef) -> list[str]:
    return [mapping.column_for(entity.name, p.name) for p in entity.properties]


def save_phase(items: Sequence[MigrationItem], plan: MigrationPlan) -> SaveResult:
    """Store each item in the source using the plan's write method, timing every store call."""
    for item in items:
        if item.size_bytes > plan.size_cap_bytes:
            raise SizeCapExceeded(f"item {item.key}: {item.size_bytes} bytes exceeds cap {plan.size_cap_bytes}")
    result = SaveResult()
    if not items:
        return result
    entity = plan.entity_def
    table = plan.mapping.table_for(entity.name)
    key_col = plan.mapping.column_for(entity.name, entity.key.name)
    order = _column_order(plan.mapping, entity)
    counter = [0]
    for batch in batches(list(items), plan.batch_size):
        rows = [_source_row(plan, item, counter) for item in batch]
        if plan.method == "baseline":
            for row in rows:
                timer = _Timer(plan.clock)
                try:
                    with timer:
                        _write_columnwise(plan.source, table, key_col, order, row)
                except StoreError as exc:
                    result.errors[row.key] = f"save: {exc}"
                result.save_ms[row.key] = _ms(timer.elapsed)
            continue
        timer = _Timer(plan.clock)
        try:
            with timer:
                _write_rows(plan.source, table, rows)
                for row in rows:
                    _write_blobs(plan.source, table, row)
        except StoreError as exc:
            for row in rows:
                result.errors[row.key] = f"save: {exc}"
        for row, share in zip(rows, split_ms(_ms(timer.elapsed), len(rows))):
            result.save_ms[row.key] = share
    return result


@dataclass
class _InFlight:
    source: RowRecord
    result: ItemResult
    blobs: dict[str, bytes] = field(default_factory=dict)
    handles: dict[str, BlobHandle] = field(default_factory=dict)
    own_ms: float = 0.0


def _to_target(plan: MigrationPlan, f: _InFlight) -> _Row:
    entity = plan.entity_def
    src, dst = plan.mapping, plan.target_mapping
    columns = {}
    for col, value in f.source.columns.items():
        columns[dst.column_for(entity.name, src.property_for(entity.name, col))] = value
    blobs = {dst.column_for(entity.name, src.property_for(entity.name, col)): data for col, data in f.blobs.items()}
    order = [dst.column_for(entity.name, p.name) for p in entity.blob_properties]
    return _Row(f.source.key, columns, blobs, order)


def transfer_phase(plan: MigrationPlan, keys: Sequence[str] | None = None) -> MigrationResult:
    """Move rows and blobs from source to destination, then verify each item.

    Lazy and baseline items are timed individually (batch-level requests are
    split equally across the batch); eager and explicit batches are timed as a
    whole and split equally. Verification reads are timed separately.
    """
    entity = plan.entity_def
    src_table = plan.mapping.table_for(entity.name)
    dst_table = plan.target_mapping.table_for(entity.name)
    blob_cols = [plan.mapping.column_for(entity.name, p.name) for p in entity.blob_properties]
    out = MigrationResult(plan.method, plan.strategy.kind, plan.batch_size)
    fetch0, put0 = plan.source.fetch_counter, plan.destination.put_counter
    if keys is None:
        keys = [r.key for r in plan.source.fetch(FetchQuery(src_table, include_columns=()))]
        fetch0 = plan.source.fetch_counter
    keys = list(keys)
    pool = ThreadPoolExecutor(plan.parallel) if plan.parallel > 1 else None
    try:
        for batch in batches(keys, plan.batch_size):
            out.items.extend(_transfer_batch(plan, list(batch), src_table, dst_table, blob_cols, pool))
    finally:
        if pool is not None:
            pool.shutdown()
    out.source_fetches = plan.source.fetch_counter - fetch0
    out.dest_puts = plan.destination.put_counter - put0
    return out


def _map(pool: ThreadPoolExecutor | None, fn: Callable[[Any], Any], items: Iterable[Any]) -> list[Any]:
    if pool is None:
        return [fn(x) for x in items]
    return list(pool.map(fn, items))


def _transfer_batch(
    plan: MigrationPlan,
    batch: list[str],
    src_table: str,
    dst_table: str,
    blob_cols: list[str],
    pool: ThreadPoolExecutor | None,
) -> list[ItemResult]:
    src, dst, clock = plan.source, plan.destination, plan.clock
    kind = plan.strategy.kind
    shared = _Timer(clock)
    whole = _Timer(clock)
    results = {k: ItemResult(k) for k in batch}

    def fail_all(exc: Exception) -> list[ItemResult]:
        for r in results.values():
            r.error = f"transfer: {exc}"
        return list(results.values())

    eager_cols = tuple(blob_cols) if kind == "eager" else ()
    explicit_cols = tuple(sorted(plan.mapping.column_for(plan.entity, p) for p in plan.strategy.columns))
    try:
        with whole:
            with shared:
                rows = src.fetch(FetchQuery(src_table, keys=tuple(batch), include_blobs=eager_cols))
                if kind == "explicit" and explicit_cols:
                    loaded = {r.key: r for r in src.fetch(FetchQuery(src_table, keys=tuple(batch), include_blobs=explicit_cols))}
                    for r in rows:
                        if r.key in loaded:
                            r.blobs.update(loaded[r.key].blobs)
    except StoreError as exc:
        return fail_all(exc)

    by_key = {r.key: r for r in rows}
    flights: list[_InFlight] = []
    for k in batch:
        if k not in by_key:
            results[k].error = "transfer: row missing at source"
            continue
        flights.append(_InFlight(by_key[k], results[k], blobs=dict(by_key[k].blobs)))

    def load_rest(f: _InFlight) -> None:
        # lazy, plus explicit columns outside the loaded set
        t = _Timer(clock)
        try:
            with t:
                for col in blob_cols:
                    if col in f.source.blob_refs and col not in f.blobs:
                        f.blobs[col] = src.fetch_blob(f.source.blob_refs[col])
        except StoreError as exc:
            f.result.error = f"transfer: {exc}"
        f.own_ms += t.elapsed

    def put_blobs(f: _InFlight, target: _Row) -> None:
        t = _Timer(clock)
        try:
            with t:
                f.handles = _write_blobs(dst, dst_table, target)
        except StoreError as exc:
            f.result.error = f"transfer: {exc}"
        f.own_ms += t.elapsed

    def columnwise(f: _InFlight, target: _Row) -> None:
        entity = plan.entity_def
        tm = plan.target_mapping
        t = _Timer(clock)
        try:
            with t:
                f.handles = _write_columnwise(
                    dst, dst_table, tm.column_for(entity.name, entity.key.name), _column_order(tm, entity), target
                )
        except StoreError as exc:
            f.result.error = f"transfer: {exc}"
        f.own_ms += t.elapsed

    with whole:
        _map(pool, load_rest, flights)
        live = [f for f in flights if f.result.error is None]
        targets = {f.source.key: _to_target(plan, f) for f in live}
        if plan.method == "baseline":
            _map(pool, lambda f: columnwise(f, targets[f.source.key]), live)
        else:
            try:
                with shared:
                    if live:
                        _write_rows(dst, dst_table, [targets[f.source.key] for f in live])
            except StoreError as exc:
                for f in live:
                    f.result.error = f"transfer: {exc}"
                live = []
            _map(pool, lambda f: put_blobs(f, targets[f.source.key]), live)

    if kind == "lazy":
        shares = split_ms(_ms(shared.elapsed), len(batch))
        for r, share in zip(results.values(), shares):
            r.transfer_ms = share
        for f in flights:
            f.result.transfer_ms += _ms(f.own_ms)
    else:
        for r, share in zip(results.values(), split_ms(_ms(whole.elapsed), len(batch))):
            r.transfer_ms = share

    _verify(plan, flights, dst_table, targets)
    return list(results.values())


def _verify(plan: MigrationPlan, flights: list[_InFlight], dst_table: str, targets: dict[str, _Row]) -> None:
    dst = plan.destination
    live = [f for f in flights if f.result.error is None]
    for f in flights:
        f.result.bytes_moved = sum(len(b) for b in f.blobs.values()) + sum(
            len(str(v).encode("utf-8")) for v in f.source.columns.values()
        )
    if not live:
        return
    timer = _Timer(plan.clock)
    with timer:
        try:
            landed = {r.key: r for r in dst.fetch(FetchQuery(dst_table, keys=tuple(f.source.key for f in live)))}
        except StoreError as exc:
            for f in live:
                f.result.error = f"verify: {exc}"
            landed = {}
        for f in live:
            if f.result.error is not None:
                continue
            target = targets[f.source.key]
            row = landed.get(f.source.key)
            problems = []
            if row is None:
                problems.append("row missing at destination")
            elif row.columns != target.columns:
                problems.append("scalar columns differ")
            src_cols = plan.mapping
            for col, ref in f.source.blob_refs.items():
                entity = plan.entity
                dcol = plan.target_mapping.column_for(entity, src_cols.property_for(entity, col))
                got = f.handles.get(dcol)
                if got is None:
                    problems.append(f"blob {col} not written")
                elif got.checksum != ref.checksum or got.size_bytes != ref.size_bytes:
                    problems.append(f"blob {col} checksum mismatch")
            f.result.error = "; ".join(problems) or None
        sampled = [f for f in live if f.result.error is None][:: max(1, plan.verify_sample_every)]
        for f in sampled:
            for dcol, handle in f.handles.items():
                target = targets[f.source.key]
                try:
                    same = dst.fetch_blob(handle) == _read(target.blobs[dcol])
                except StoreError as exc:
                    f.result.error = f"verify: {exc}"
                    break
                if not same:
                    f.result.error = f"blob {dcol} bytes differ at destination"
                    break
    shares = split_ms(_ms(timer.elapsed), len(live))
    for f, share in zip(live, shares):
        f.result.verify_ms = share
        f.result.verified = f.result.error is None


def _read(data: bytes | Path) -> bytes:
    return data if isinstance(data, (bytes, bytearray)) else Path(data).read_bytes()


def execute(
    plan: MigrationPlan,
    items: Sequence[MigrationItem],
    *,
    after_save: Callable[[MigrationPlan, SaveResult], None] | None = None,
) -> MigrationResult:
    """Save ``items`` into the source, then transfer them. ``after_save`` runs in between."""
    saved = save_phase(items, plan)
    if after_save is not None:
        after_save(plan, saved)
    keys = [i.key for i in items if i.key not in saved.errors]
    result = transfer_phase(plan, keys)
    by_key = {r.key: r for r in result.items}
    merged = []
    for item in items:
        r = by_key.get(item.key) or ItemResult(item.key, error=saved.errors.get(item.key))
        r.save_ms = saved.save_ms.get(item.key, 0)
        merged.append(r)
    result.items = merged
    failed = len(result.failed)
    log.info("%s/%s: %d items, %d failed", plan.method, plan.strategy.kind, len(merged), failed)
    return result

