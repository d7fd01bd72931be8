"""Pre-migration checks: format, consistency, length, range and integrity.

``run_all`` applies them in that order. Under the ``exclude`` policy a record
with a violation is dropped and later checks never see it (though integrity
still notices references *to* it); under ``fail`` the first check that finds
anything aborts the run.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .schema import (
    BLOB_KINDS,
    INTEGER,
    TEXT,
    TEXT_BLOB,
    ConceptualModel,
    MappingSpec,
    StorageModel,
)
from .store.base import DEFAULT_SIZE_CAP, BlobHandle, RowRecord

CHECKS = ("format", "consistency", "length", "range", "integrity")
POLICIES = ("exclude", "fail")

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

# smallest first; unsigned preferred at equal width when nothing is negative
INTEGER_KINDS = (
    ("uint8", 0, (1 << 8) - 1),
    ("int8", -(1 << 7), (1 << 7) - 1),
    ("uint16", 0, (1 << 16) - 1),
    ("int16", -(1 << 15), (1 << 15) - 1),
    ("uint32", 0, (1 << 32) - 1),
    ("int32", -(1 << 31), (1 << 31) - 1),
    ("int64", INT64_MIN, INT64_MAX),
)


class ValidationError(ValueError):
    """The record stream itself could not be read."""


@dataclass(frozen=True)
class Record:
    entity: str
    values: Mapping[str, Any]


@dataclass(frozen=True)
class Violation:
    check: str
    entity: str
    record_key: Any
    property: str | None
    detail: str

    def __post_init__(self) -> None:
        if self.check not in CHECKS:
            raise ValueError(f"unknown check {self.check!r}")


@dataclass(frozen=True)
class Recommendation:
    storage_kind: str
    max_length: int | None = None


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    records_scanned: int = 0
    records_excluded: int = 0
    range_recommendations: dict[str, Recommendation] = field(default_factory=dict)
    aborted_at: str | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_check(self) -> dict[str, int]:
        counts = {c: 0 for c in CHECKS}
        for v in self.violations:
            counts[v.check] += 1
        return counts

    def to_dict(self) -> dict[str, Any]:
        return {
            "violations": [asdict(v) for v in self.violations],
            "records_scanned": self.records_scanned,
            "records_excluded": self.records_excluded,
            "range_recommendations": {k: asdict(v) for k, v in sorted(self.range_recommendations.items())},
            "aborted_at": self.aborted_at,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=str)

    def format_table(self) -> str:
        lines = [f"{'check':<12} {'entity':<14} {'key':<16} {'property':<14} detail"]
        for v in self.violations:
            lines.append(f"{v.check:<12} {v.entity:<14} {str(v.record_key):<16} {str(v.property or '-'):<14} {v.detail}")
        lines.append(
            f"scanned={self.records_scanned} excluded={self.records_excluded} violations={len(self.violations)}"
            + (f" aborted_at={self.aborted_at}" if self.aborted_at else "")
        )
        return "\n".join(lines)


class ValidationAborted(Exception):
    """Raised under the ``fail`` policy; carries the partial report."""

    def __init__(self, report: ValidationReport) -> None:
        super().__init__(f"validation failed at {report.aborted_at} check with {len(report.violations)} violation(s)")
        self.report = report


Indexed = Sequence[tuple[int, Record]]
Found = list[tuple[int, Violation]]


def _materialize(records: Iterable[Record]) -> list[tuple[int, Record]]:
    out = []
    try:
        for i, r in enumerate(records):
            if not isinstance(r, Record) or not isinstance(r.values, Mapping):
                raise ValidationError(f"item {i} is not a Record: {r!r}")
            out.append((i, r))
    except ValidationError:
        raise
    except Exception as exc:  # noqa: BLE001 - any failure of the source stream
        raise ValidationError(f"unreadable record stream: {exc}") from exc
    return out


def _key_of(record: Record, model: ConceptualModel) -> Any:
    entity = model.get(record.entity)
    return None if entity is None else record.values.get(entity.key.name)


def value_size(value: Any) -> int:
    """Encoded size in bytes: UTF-8 for text, raw length for bytes, declared size for handles."""
    if isinstance(value, str):
        return len(value.encode("utf-8"))
    if isinstance(value, BlobHandle):
        return value.size_bytes
    if hasattr(value, "size_bytes"):
        return int(value.size_bytes)
    return len(value)


def _type_ok(kind: str, value: Any) -> bool:
    if kind == TEXT:
        return isinstance(value, str)
    if kind == INTEGER:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == TEXT_BLOB and isinstance(value, str):
        return True
    return isinstance(value, (bytes, bytearray, memoryview, BlobHandle)) or hasattr(value, "size_bytes")


def _sorted(found: Found) -> Found:
    return sorted(found, key=lambda iv: (CHECKS.index(iv[1].check), iv[1].entity, str(iv[1].record_key), iv[0]))


# ---------------------------------------------------------------------------
# individual checks over (index, record) pairs
# ---------------------------------------------------------------------------


def _format(indexed: Indexed, model: ConceptualModel) -> Found:
    found: Found = []
    for i, rec in indexed:
        entity = model.get(rec.entity)
        if entity is None:
            found.append((i, Violation("format", rec.entity, None, None, f"unknown entity {rec.entity!r}")))
            continue
        key = rec.values.get(entity.key.name)
        problems: list[tuple[str, str]] = []
        for name in sorted(rec.values):
            if not entity.has_property(name):
                problems.append((name, f"unknown property {name!r}"))
        for p in entity.properties:
            value = rec.values.get(p.name)
            if value is None:
                if p.required:
                    problems.append((p.name, f"required property {p.name!r} missing"))
            elif not _type_ok(p.kind, value):
                problems.append((p.name, f"{p.name!r} is {type(value).__name__}, expected {p.kind}"))
        if problems:
            detail = "; ".join(d for _, d in problems)
            found.append((i, Violation("format", rec.entity, key, problems[0][0], detail)))
    return found


def _consistency(indexed: Indexed, model: ConceptualModel) -> Found:
    found: Found = []
    seen: set[tuple[str, Any]] = set()
    targets: dict[tuple[str, str], set[Any]] = defaultdict(set)
    for _, rec in indexed:
        for name, value in rec.values.items():
            targets[(rec.entity, name)].add(value)
    for i, rec in indexed:
        entity = model.entity(rec.entity)
        key = rec.values.get(entity.key.name)
        if (rec.entity, key) in seen:
            found.append((i, Violation("consistency", rec.entity, key, entity.key.name, f"duplicate key {key!r}")))
        seen.add((rec.entity, key))
        for assoc in entity.associations:
            ref = rec.values.get(assoc.from_property)
            if ref is not None and ref not in targets[(assoc.to_entity, assoc.to_property)]:
                found.append(
                    (
                        i,
                        Violation(
                            "consistency",
                            rec.entity,
                            key,
                            assoc.from_property,
                            f"dangling reference {assoc.name}: no {assoc.to_entity}.{assoc.to_property} = {ref!r}",
                        ),
                    )
                )
    return found


def _length(
    indexed: Indexed, model: ConceptualModel, mapping: MappingSpec, storage: StorageModel, size_cap_bytes: int
) -> Found:
    found: Found = []
    for i, rec in indexed:
        entity = model.entity(rec.entity)
        key = rec.values.get(entity.key.name)
        table = storage.table(mapping.entity_to_table.get(rec.entity, ""))
        for p in entity.properties:
            value = rec.values.get(p.name)
            if value is None or p.kind == INTEGER:
                continue
            size = value_size(value)
            column = table.column(mapping.property_to_column.get((rec.entity, p.name), "")) if table else None
            limit = column.max_length if column is not None else None
            if limit is not None and size > limit:
                found.append((i, Violation("length", rec.entity, key, p.name, f"{size} bytes > column max {limit}")))
            elif p.kind in BLOB_KINDS and size > size_cap_bytes:
                found.append((i, Violation("length", rec.entity, key, p.name, f"{size} bytes > size cap {size_cap_bytes}")))
    return found


def _range(indexed: Indexed, model: ConceptualModel) -> Found:
    found: Found = []
    for i, rec in indexed:
        entity = model.entity(rec.entity)
        key = rec.values.get(entity.key.name)
        for p in entity.properties:
            value = rec.values.get(p.name)
            if p.kind == INTEGER and value is not None and not INT64_MIN <= value <= INT64_MAX:
                found.append((i, Violation("range", rec.entity, key, p.name, f"{value} outside the 64-bit signed range")))
    return found


def _recommend(indexed: Indexed, model: ConceptualModel) -> dict[str, Recommendation]:
    observed: dict[str, list[Any]] = defaultdict(list)
    kinds: dict[str, str] = {}
    for _, rec in indexed:
        entity = model.entity(rec.entity)
        for p in entity.properties:
            value = rec.values.get(p.name)
            if value is None or p.kind not in (TEXT, INTEGER):
                continue
            qualified = f"{rec.entity}.{p.name}"
            kinds[qualified] = p.kind
            observed[qualified].append(value)
    out: dict[str, Recommendation] = {}
    for qualified, values in sorted(observed.items()):
        if kinds[qualified] == TEXT:
            out[qualified] = Recommendation("varchar", max(1, max(value_size(v) for v in values)))
            continue
        lo, hi = min(values), max(values)
        for name, kmin, kmax in INTEGER_KINDS:
            if kmin <= lo and hi <= kmax:
                out[qualified] = Recommendation(name)
                break
    return out


def _integrity(indexed: Indexed, model: ConceptualModel, excluded: Indexed = ()) -> Found:
    live: dict[tuple[str, str], set[Any]] = defaultdict(set)
    dead: dict[tuple[str, str], set[Any]] = defaultdict(set)
    for _, rec in indexed:
        for name, value in rec.values.items():
            live[(rec.entity, name)].add(value)
    for _, rec in excluded:
        for name, value in rec.values.items():
            dead[(rec.entity, name)].add(value)
    found: Found = []
    for i, rec in indexed:
        entity = model.get(rec.entity)
        if entity is None:
            continue
        key = rec.values.get(entity.key.name)
        for assoc in entity.associations:
            ref = rec.values.get(assoc.from_property)
            target = (assoc.to_entity, assoc.to_property)
            if ref is None or ref in live[target]:
                continue
            why = "excluded" if ref in dead[target] else "absent"
            found.append(
                (
                    i,
                    Violation(
                        "integrity",
                        rec.entity,
                        key,
                        assoc.from_property,
                        f"{assoc.name} references {why} {assoc.to_entity}.{assoc.to_property} = {ref!r}",
                    ),
                )
            )
    return found


# ---------------------------------------------------------------------------
# public surface
# ---------------------------------------------------------------------------


def format_check(records: Iterable[Record], model: ConceptualModel) -> list[Violation]:
    return [v for _, v in _sorted(_format(_materialize(records), model))]


def consistency_check(records: Iterable[Record], model: ConceptualModel) -> list[Violation]:
    return [v for _, v in _sorted(_consistency(_materialize(records), model))]


def length_check(
    records: Iterable[Record],
    mapping: MappingSpec,
    storage: StorageModel,
    model: ConceptualModel,
    size_cap_bytes: int = DEFAULT_SIZE_CAP,
) -> list[Violation]:
    """Values whose encoded size exceeds the target column (inclusive bound) or the blob size cap."""
    return [v for _, v in _sorted(_length(_materialize(records), model, mapping, storage, size_cap_bytes))]


def range_check(records: Iterable[Record], model: ConceptualModel) -> dict[str, Recommendation]:
    """Smallest storage kind covering each integer/text property, keyed ``Entity.Property``."""
    return _recommend(_materialize(records), model)


def range_violations(records: Iterable[Record], model: ConceptualModel) -> list[Violation]:
    return [v for _, v in _sorted(_range(_materialize(records), model))]


def integrity_check(
    records: Iterable[Record], model: ConceptualModel, excluded: Iterable[Record] = ()
) -> list[Violation]:
    """Association endpoints whose referenced record is absent, or present only in ``excluded``."""
    return [v for _, v in _sorted(_integrity(_materialize(records), model, _materialize(excluded)))]


def run_all(
    records: Iterable[Record],
    model: ConceptualModel,
    mapping: MappingSpec,
    storage: StorageModel,
    policy: str = "exclude",
    size_cap_bytes: int = DEFAULT_SIZE_CAP,
) -> ValidationReport:
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    indexed = _materialize(records)
    report = ValidationReport(records_scanned=len(indexed))
    excluded: set[int] = set()

    def visible() -> list[tuple[int, Record]]:
        return [(i, r) for i, r in indexed if i not in excluded]

    def gone() -> list[tuple[int, Record]]:
        return [(i, r) for i, r in indexed if i in excluded]

    stages = (
        ("format", lambda: _format(visible(), model)),
        ("consistency", lambda: _consistency(visible(), model)),
        ("length", lambda: _length(visible(), model, mapping, storage, size_cap_bytes)),
        ("range", lambda: _range(visible(), model)),
        ("integrity", lambda: _integrity(visible(), model, gone())),
    )
    for name, stage in stages:
        found = _sorted(stage())
        report.violations.extend(v for _, v in found)
        excluded.update(i for i, _ in found)
        if name == "range":
            report.range_recommendations = _recommend(visible(), model)
        if found and policy == "fail":
            report.records_excluded = 0
            report.aborted_at = name
            raise ValidationAborted(report)
    report.records_excluded = len(excluded)
    return report


def records_from_rows(rows: Iterable[RowRecord], model: ConceptualModel, mapping: MappingSpec) -> list[Record]:
    """Turn stored rows back into entity records; blobs appear as their handles."""
    by_table = {t: e for e, t in mapping.entity_to_table.items()}
    out = []
    for row in rows:
        entity = by_table.get(row.table)
        if entity is None:
            raise ValidationError(f"table {row.table!r} is not mapped to any entity")
        values: dict[str, Any] = {}
        for column, value in row.columns.items():
            try:
                values[mapping.property_for(entity, column)] = value
            except KeyError:
                values[column] = value  # surfaces as an unknown property in the format check
        for column, handle in row.blob_refs.items():
            try:
                values[mapping.property_for(entity, column)] = handle
            except KeyError:
                values[column] = handle
        out.append(Record(entity, values))
    return out
