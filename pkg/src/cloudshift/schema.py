"""Entity data model: conceptual entities, storage tables and the mapping between them.

Model documents are JSON objects with the top-level keys ``entities``,
``storage`` and ``mapping``. Only ``entities`` is required; a missing storage
schema is generated from the entities through the type map, and a missing
mapping is derived by name.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

IDENTIFIER_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

TEXT = "text"
INTEGER = "integer"
BINARY_BLOB = "binary_blob"
TEXT_BLOB = "text_blob"
PROPERTY_KINDS = (TEXT, INTEGER, BINARY_BLOB, TEXT_BLOB)
BLOB_KINDS = frozenset({BINARY_BLOB, TEXT_BLOB})

DEFAULT_NAMESPACE = "dbo"
DEFAULT_TEXT_LENGTH = 255


class ModelError(ValueError):
    """Raised for malformed model documents or invariant violations."""


def check_identifier(name: Any, what: str = "identifier") -> str:
    if not isinstance(name, str) or not IDENTIFIER_RE.match(name):
        raise ModelError(f"invalid {what}: {name!r}")
    return name


def _check_unique(names: Iterable[str], what: str) -> None:
    seen: set[str] = set()
    for name in names:
        if name in seen:
            raise ModelError(f"duplicate {what}: {name!r}")
        seen.add(name)


@dataclass(frozen=True)
class PropertyDef:
    name: str
    kind: str
    max_length: int | None = None
    required: bool = False
    is_key: bool = False
    generated: bool = False

    def __post_init__(self) -> None:
        check_identifier(self.name, "property name")
        if self.kind not in PROPERTY_KINDS:
            raise ModelError(f"property {self.name!r}: unknown kind {self.kind!r}")
        if self.max_length is not None and (
            isinstance(self.max_length, bool) or not isinstance(self.max_length, int) or self.max_length <= 0
        ):
            raise ModelError(f"property {self.name!r}: max_length must be a positive integer")
        if self.is_key and not self.required:
            raise ModelError(f"property {self.name!r}: key properties must be required")
        if self.is_key and self.kind in BLOB_KINDS:
            raise ModelError(f"property {self.name!r}: blob properties cannot be keys")

    @property
    def is_blob(self) -> bool:
        return self.kind in BLOB_KINDS


@dataclass(frozen=True)
class AssociationDef:
    name: str
    from_entity: str
    from_property: str
    to_entity: str
    to_property: str

    def __post_init__(self) -> None:
        for attr in ("name", "from_entity", "from_property", "to_entity", "to_property"):
            check_identifier(getattr(self, attr), f"association {attr}")


@dataclass(frozen=True)
class EntityDef:
    name: str
    properties: tuple[PropertyDef, ...]
    associations: tuple[AssociationDef, ...] = ()

    def __post_init__(self) -> None:
        check_identifier(self.name, "entity name")
        object.__setattr__(self, "properties", tuple(self.properties))
        object.__setattr__(self, "associations", tuple(self.associations))
        _check_unique((p.name for p in self.properties), f"property name in entity {self.name!r}")
        keys = [p for p in self.properties if p.is_key]
        if not keys:
            raise ModelError(f"entity {self.name!r} has no key property")
        if len(keys) > 1:
            raise ModelError(f"entity {self.name!r}: composite keys are not supported")
        for assoc in self.associations:
            if assoc.from_entity != self.name:
                raise ModelError(
                    f"association {assoc.name!r} declared on {self.name!r} but starts at {assoc.from_entity!r}"
                )

    @property
    def key(self) -> PropertyDef:
        return next(p for p in self.properties if p.is_key)

    def get_property(self, name: str) -> PropertyDef:
        for p in self.properties:
            if p.name == name:
                return p
        raise KeyError(name)

    def has_property(self, name: str) -> bool:
        return any(p.name == name for p in self.properties)

    @property
    def scalar_properties(self) -> tuple[PropertyDef, ...]:
        return tuple(p for p in self.properties if not p.is_blob)

    @property
    def blob_properties(self) -> tuple[PropertyDef, ...]:
        return tuple(p for p in self.properties if p.is_blob)


@dataclass(frozen=True)
class ConceptualModel:
    entities: tuple[EntityDef, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entities", tuple(self.entities))
        if not self.entities:
            raise ModelError("model defines no entities")
        _check_unique((e.name for e in self.entities), "entity name")
        for entity in self.entities:
            for assoc in entity.associations:
                if not entity.has_property(assoc.from_property):
                    raise ModelError(f"association {assoc.name!r}: unknown property {assoc.from_property!r}")
                target = self.get(assoc.to_entity)
                if target is None:
                    raise ModelError(f"association {assoc.name!r}: unknown entity {assoc.to_entity!r}")
                if not target.has_property(assoc.to_property):
                    raise ModelError(f"association {assoc.name!r}: unknown property {assoc.to_property!r}")

    def get(self, name: str) -> EntityDef | None:
        for e in self.entities:
            if e.name == name:
                return e
        return None

    def entity(self, name: str) -> EntityDef:
        found = self.get(name)
        if found is None:
            raise KeyError(name)
        return found

    @property
    def associations(self) -> tuple[AssociationDef, ...]:
        return tuple(a for e in self.entities for a in e.associations)


@dataclass(frozen=True)
class ColumnDef:
    name: str
    storage_kind: str
    max_length: int | None = None
    nullable: bool = True

    def __post_init__(self) -> None:
        check_identifier(self.name, "column name")
        if self.max_length is not None and self.max_length <= 0:
            raise ModelError(f"column {self.name!r}: max_length must be positive")


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]
    primary_key: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        check_identifier(self.name, "table name")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "primary_key", tuple(self.primary_key))
        _check_unique((c.name for c in self.columns), f"column name in table {self.name!r}")
        names = {c.name for c in self.columns}
        for pk in self.primary_key:
            if pk not in names:
                raise ModelError(f"table {self.name!r}: primary key column {pk!r} missing")

    def column(self, name: str) -> ColumnDef | None:
        for c in self.columns:
            if c.name == name:
                return c
        return None


@dataclass(frozen=True)
class StorageModel:
    tables: tuple[TableDef, ...]
    schema_namespace: str = DEFAULT_NAMESPACE

    def __post_init__(self) -> None:
        check_identifier(self.schema_namespace, "schema namespace")
        object.__setattr__(self, "tables", tuple(self.tables))
        _check_unique((t.name for t in self.tables), "table name")

    def table(self, name: str) -> TableDef | None:
        for t in self.tables:
            if t.name == name:
                return t
        return None


@dataclass(frozen=True)
class StorageType:
    storage_kind: str
    default_max_length: int | None


# text -> bounded varchar, integer -> 64-bit signed, blobs -> unbounded
DEFAULT_TYPE_MAP: Mapping[str, StorageType] = {
    TEXT: StorageType("varchar", DEFAULT_TEXT_LENGTH),
    INTEGER: StorageType("bigint", None),
    BINARY_BLOB: StorageType("varbinary_max", None),
    TEXT_BLOB: StorageType("text_max", None),
}

BLOB_STORAGE_KINDS = frozenset(DEFAULT_TYPE_MAP[k].storage_kind for k in BLOB_KINDS)


@dataclass(frozen=True)
class MappingSpec:
    """Read-only bridge from entities/properties to tables/columns."""

    entity_to_table: Mapping[str, str]
    property_to_column: Mapping[tuple[str, str], str]
    type_map: Mapping[str, StorageType] = field(default_factory=lambda: dict(DEFAULT_TYPE_MAP))

    def __post_init__(self) -> None:
        missing = set(PROPERTY_KINDS) - set(self.type_map)
        extra = set(self.type_map) - set(PROPERTY_KINDS)
        if missing or extra:
            raise ModelError(f"type_map must cover exactly {PROPERTY_KINDS}; missing={sorted(missing)} extra={sorted(extra)}")

    def table_for(self, entity: str) -> str:
        return self.entity_to_table[entity]

    def column_for(self, entity: str, prop: str) -> str:
        return self.property_to_column[(entity, prop)]

    def property_for(self, entity: str, column: str) -> str:
        for (ent, prop), col in self.property_to_column.items():
            if ent == entity and col == column:
                return prop
        raise KeyError((entity, column))


@dataclass(frozen=True)
class MappingViolation:
    kind: str  # unmapped | dangling | length | type
    entity: str
    property: str | None
    detail: str


@dataclass(frozen=True)
class ModelBundle:
    conceptual: ConceptualModel
    storage: StorageModel
    mapping: MappingSpec


# ---------------------------------------------------------------------------
# document parsing
# ---------------------------------------------------------------------------


def _expect(doc: Mapping[str, Any], key: str, kind: type, where: str) -> Any:
    if key not in doc:
        raise ModelError(f"{where}: missing key {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise ModelError(f"{where}: {key!r} must be {kind.__name__}")
    return value


def _parse_property(doc: Any, where: str) -> PropertyDef:
    if not isinstance(doc, Mapping):
        raise ModelError(f"{where}: property must be an object")
    allowed = {"name", "kind", "max_length", "required", "is_key", "generated"}
    unknown = set(doc) - allowed
    if unknown:
        raise ModelError(f"{where}: unknown property keys {sorted(unknown)}")
    for flag in ("required", "is_key", "generated"):
        if flag in doc and not isinstance(doc[flag], bool):
            raise ModelError(f"{where}: {flag!r} must be boolean")
    return PropertyDef(
        name=_expect(doc, "name", str, where),
        kind=_expect(doc, "kind", str, where),
        max_length=doc.get("max_length"),
        required=doc.get("required", False),
        is_key=doc.get("is_key", False),
        generated=doc.get("generated", False),
    )


def _parse_entity(doc: Any) -> EntityDef:
    if not isinstance(doc, Mapping):
        raise ModelError("entity must be an object")
    name = _expect(doc, "name", str, "entity")
    where = f"entity {name!r}"
    props = [_parse_property(p, where) for p in _expect(doc, "properties", list, where)]
    assocs = []
    for a in doc.get("associations", []):
        if not isinstance(a, Mapping):
            raise ModelError(f"{where}: association must be an object")
        assocs.append(
            AssociationDef(
                name=_expect(a, "name", str, where),
                from_entity=a.get("from_entity", name),
                from_property=_expect(a, "from_property", str, where),
                to_entity=_expect(a, "to_entity", str, where),
                to_property=_expect(a, "to_property", str, where),
            )
        )
    return EntityDef(name=name, properties=tuple(props), associations=tuple(assocs))


def build_model(definition_doc: Mapping[str, Any] | str) -> ConceptualModel:
    """Build a :class:`ConceptualModel` from a model document (dict or JSON text)."""
    if isinstance(definition_doc, str):
        try:
            definition_doc = json.loads(definition_doc)
        except json.JSONDecodeError as exc:
            raise ModelError(f"model document does not parse: {exc}") from exc
    if not isinstance(definition_doc, Mapping):
        raise ModelError("model document must be a JSON object")
    entities = _expect(definition_doc, "entities", list, "model document")
    return ConceptualModel(entities=tuple(_parse_entity(e) for e in entities))


def serialize_model(model: ConceptualModel) -> dict[str, Any]:
    """Inverse of :func:`build_model`."""
    entities = []
    for e in model.entities:
        props = []
        for p in e.properties:
            item: dict[str, Any] = {"name": p.name, "kind": p.kind}
            if p.max_length is not None:
                item["max_length"] = p.max_length
            if p.required:
                item["required"] = True
            if p.is_key:
                item["is_key"] = True
            if p.generated:
                item["generated"] = True
            props.append(item)
        entry: dict[str, Any] = {"name": e.name, "properties": props}
        if e.associations:
            entry["associations"] = [
                {
                    "name": a.name,
                    "from_entity": a.from_entity,
                    "from_property": a.from_property,
                    "to_entity": a.to_entity,
                    "to_property": a.to_property,
                }
                for a in e.associations
            ]
        entities.append(entry)
    return {"entities": entities}


def _parse_storage(doc: Any) -> StorageModel:
    if not isinstance(doc, Mapping):
        raise ModelError("storage must be an object")
    tables = []
    for t in _expect(doc, "tables", list, "storage"):
        name = _expect(t, "name", str, "table")
        cols = [
            ColumnDef(
                name=_expect(c, "name", str, f"table {name!r}"),
                storage_kind=_expect(c, "storage_kind", str, f"table {name!r}"),
                max_length=c.get("max_length"),
                nullable=c.get("nullable", True),
            )
            for c in _expect(t, "columns", list, f"table {name!r}")
        ]
        tables.append(TableDef(name=name, columns=tuple(cols), primary_key=tuple(t.get("primary_key", ()))))
    return StorageModel(tables=tuple(tables), schema_namespace=doc.get("schema_namespace", DEFAULT_NAMESPACE))


def serialize_storage(storage: StorageModel) -> dict[str, Any]:
    return {
        "schema_namespace": storage.schema_namespace,
        "tables": [
            {
                "name": t.name,
                "columns": [
                    {"name": c.name, "storage_kind": c.storage_kind, "max_length": c.max_length, "nullable": c.nullable}
                    for c in t.columns
                ],
                "primary_key": list(t.primary_key),
            }
            for t in storage.tables
        ],
    }


def _parse_type_map(doc: Mapping[str, Any]) -> dict[str, StorageType]:
    out = {}
    for kind, entry in doc.items():
        if not isinstance(entry, Mapping):
            raise ModelError(f"type_map[{kind!r}] must be an object")
        out[kind] = StorageType(_expect(entry, "storage_kind", str, f"type_map[{kind!r}]"), entry.get("max_length"))
    return out


def serialize_mapping(spec: MappingSpec) -> dict[str, Any]:
    nested: dict[str, dict[str, str]] = {}
    for (entity, prop), col in spec.property_to_column.items():
        nested.setdefault(entity, {})[prop] = col
    return {
        "entity_to_table": dict(spec.entity_to_table),
        "property_to_column": nested,
        "type_map": {
            k: {"storage_kind": v.storage_kind, "max_length": v.default_max_length} for k, v in spec.type_map.items()
        },
    }


def storage_from_conceptual(
    conceptual: ConceptualModel,
    type_map: Mapping[str, StorageType] = DEFAULT_TYPE_MAP,
    namespace: str = DEFAULT_NAMESPACE,
) -> StorageModel:
    """Generate the storage schema implied by ``conceptual`` under ``type_map``."""
    tables = []
    for e in conceptual.entities:
        cols = []
        for p in e.properties:
            st = type_map[p.kind]
            max_length = p.max_length if p.max_length is not None else st.default_max_length
            if st.storage_kind in BLOB_STORAGE_KINDS or p.kind == INTEGER:
                max_length = None
            cols.append(ColumnDef(p.name, st.storage_kind, max_length, nullable=not p.required))
        tables.append(TableDef(e.name, tuple(cols), (e.key.name,)))
    return StorageModel(tuple(tables), namespace)


def derive_default_mapping(
    conceptual: ConceptualModel,
    storage: StorageModel,
    overrides: Mapping[str, Any] | None = None,
    type_map: Mapping[str, StorageType] = DEFAULT_TYPE_MAP,
) -> MappingSpec:
    """Map entities and properties to identically named tables and columns.

    ``overrides`` may carry ``entity_to_table`` and a nested
    ``property_to_column`` (entity -> property -> column) that take priority
    over name matching.
    """
    overrides = overrides or {}
    table_over = dict(overrides.get("entity_to_table", {}))
    column_over = overrides.get("property_to_column", {})
    e2t: dict[str, str] = {}
    p2c: dict[tuple[str, str], str] = {}
    for e in conceptual.entities:
        table_name = table_over.get(e.name, e.name)
        table = storage.table(table_name)
        if table is None:
            raise ModelError(f"entity {e.name!r}: no table named {table_name!r} and no explicit mapping")
        e2t[e.name] = table_name
        for p in e.properties:
            col = column_over.get(e.name, {}).get(p.name, p.name)
            if table.column(col) is None:
                raise ModelError(f"property {e.name}.{p.name}: no column {col!r} in table {table_name!r}")
            p2c[(e.name, p.name)] = col
    return MappingSpec(e2t, p2c, dict(type_map))


def validate_mapping(spec: MappingSpec, conceptual: ConceptualModel, storage: StorageModel) -> list[MappingViolation]:
    """Return every unresolved reference, type mismatch and length overflow; empty means valid."""
    out: list[MappingViolation] = []
    for entity_name, table_name in spec.entity_to_table.items():
        if conceptual.get(entity_name) is None:
            out.append(MappingViolation("dangling", entity_name, None, f"unknown entity {entity_name!r}"))
        if storage.table(table_name) is None:
            out.append(MappingViolation("dangling", entity_name, None, f"unknown table {table_name!r}"))
    for (entity_name, prop_name), col_name in spec.property_to_column.items():
        entity = conceptual.get(entity_name)
        if entity is None or not entity.has_property(prop_name):
            out.append(MappingViolation("dangling", entity_name, prop_name, f"unknown property {entity_name}.{prop_name}"))
            continue
        table_name = spec.entity_to_table.get(entity_name)
        table = storage.table(table_name) if table_name else None
        if table is None:
            continue  # already reported at entity level
        column = table.column(col_name)
        if column is None:
            out.append(
                MappingViolation("dangling", entity_name, prop_name, f"unknown column {table_name}.{col_name}")
            )
            continue
        prop = entity.get_property(prop_name)
        expected = spec.type_map[prop.kind].storage_kind
        if column.storage_kind != expected:
            out.append(
                MappingViolation(
                    "type", entity_name, prop_name, f"{prop.kind} expects {expected}, column is {column.storage_kind}"
                )
            )
        length = prop.max_length if prop.max_length is not None else spec.type_map[prop.kind].default_max_length
        if column.max_length is not None and (length is None or length > column.max_length):
            shown = "unbounded" if length is None else length
            out.append(
                MappingViolation(
                    "length", entity_name, prop_name, f"max_length {shown} exceeds column max_length {column.max_length}"
                )
            )
    for entity in conceptual.entities:
        if entity.name not in spec.entity_to_table:
            out.append(MappingViolation("unmapped", entity.name, None, f"entity {entity.name!r} has no table"))
            continue
        for p in entity.properties:
            if (entity.name, p.name) not in spec.property_to_column:
                out.append(MappingViolation("unmapped", entity.name, p.name, f"property {entity.name}.{p.name} has no column"))
    return out


def load_model_document(doc: Mapping[str, Any] | str) -> ModelBundle:
    """Parse a full model document into conceptual model, storage schema and mapping."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ModelError(f"model document does not parse: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ModelError("model document must be a JSON object")
    unknown = set(doc) - {"entities", "storage", "mapping"}
    if unknown:
        raise ModelError(f"unknown top-level keys {sorted(unknown)}")
    conceptual = build_model(doc)
    mapping_doc = doc.get("mapping") or {}
    type_map = _parse_type_map(mapping_doc["type_map"]) if "type_map" in mapping_doc else dict(DEFAULT_TYPE_MAP)
    if "storage" in doc:
        storage = _parse_storage(doc["storage"])
    else:
        storage = storage_from_conceptual(conceptual, type_map)
    mapping = derive_default_mapping(conceptual, storage, mapping_doc, type_map)
    return ModelBundle(conceptual, storage, mapping)


def serialize_bundle(bundle: ModelBundle) -> dict[str, Any]:
    doc = serialize_model(bundle.conceptual)
    doc["storage"] = serialize_storage(bundle.storage)
    doc["mapping"] = serialize_mapping(bundle.mapping)
    return doc


PERSONNEL_DOCUMENT: dict[str, Any] = {
    "entities": [
        {
            "name": "Personnel",
            "properties": [
                {"name": "PersonalID", "kind": TEXT, "max_length": 50, "required": True, "is_key": True},
                {"name": "LastName", "kind": TEXT, "max_length": 50},
                {"name": "FirstName", "kind": TEXT, "max_length": 50},
                {"name": "Address", "kind": TEXT, "max_length": 100},
                {"name": "City", "kind": TEXT, "max_length": 50},
                {"name": "TextFile", "kind": TEXT_BLOB},
                {"name": "Picture", "kind": BINARY_BLOB},
            ],
        }
    ]
}

PRESETS = {"personnel": PERSONNEL_DOCUMENT}


def load_model(ref: str | Path) -> ModelBundle:
    """Resolve a preset name or a path to a JSON model document."""
    if isinstance(ref, str) and ref in PRESETS:
        return load_model_document(PRESETS[ref])
    path = Path(ref)
    if not path.is_file():
        raise ModelError(f"no preset or model file named {str(ref)!r}")
    return load_model_document(path.read_text(encoding="utf-8"))
