"""Seeded benchmark corpora.

Every byte is a pure function of ``(category, count, size range, seed)``:
sizes come from one generator per category, file contents from one generator
per file, both derived from the seed through ``numpy.random.SeedSequence``.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .engine import CATEGORIES, MigrationItem
from .schema import BINARY_BLOB, TEXT, TEXT_BLOB, EntityDef
from .store.checksum import Fnv1a64, format_checksum, parse_checksum

KIB = 1024
MIB = 1024 * KIB

SMALL_RANGE = (100 * KIB, 900 * KIB)
LARGE_RANGE = (1 * MIB, 8 * MIB)
DEFAULT_RANGES = {
    "image_small": SMALL_RANGE,
    "text_small": SMALL_RANGE,
    "image_large": LARGE_RANGE,
    "text_large": LARGE_RANGE,
}

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
# signature + IHDR chunk + IDAT framing + IEND chunk
PNG_OVERHEAD = 8 + (12 + 13) + 12 + 12
MANIFEST_NAME = "manifest.json"


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusFile:
    id: str
    size: int
    checksum: int


@dataclass(frozen=True)
class CorpusManifest:
    category: str
    count: int
    size_min_bytes: int
    size_max_bytes: int
    seed: int
    files: tuple[CorpusFile, ...]

    def to_json(self) -> str:
        doc = asdict(self)
        doc["files"] = [{"id": f.id, "size": f.size, "checksum": format_checksum(f.checksum)} for f in self.files]
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CorpusManifest":
        doc: dict[str, Any] = json.loads(text)
        files = tuple(CorpusFile(f["id"], f["size"], parse_checksum(f["checksum"])) for f in doc["files"])
        return cls(doc["category"], doc["count"], doc["size_min_bytes"], doc["size_max_bytes"], doc["seed"], files)

    def path_for(self, corpus_dir: Path, file_id: str) -> Path:
        return Path(corpus_dir) / self.category / f"{file_id}{suffix_for(self.category)}"


def suffix_for(category: str) -> str:
    return ".png" if category.startswith("image") else ".txt"


def _category_index(category: str) -> int:
    if category not in CATEGORIES:
        raise CorpusError(f"unknown category {category!r}; expected one of {CATEGORIES}")
    return CATEGORIES.index(category)


def _png_chunk(kind: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", zlib.crc32(kind + data) & 0xFFFFFFFF)


def image_bytes(rng: np.random.Generator, size: int) -> bytes:
    """PNG-framed payload of exactly ``size`` bytes: valid signature, IHDR and chunk CRCs, random IDAT body."""
    if size < PNG_OVERHEAD:
        raise CorpusError(f"image files need at least {PNG_OVERHEAD} bytes, got {size}")
    width, height = (int(x) for x in rng.integers(1, 4096, size=2))
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    body = rng.bytes(size - PNG_OVERHEAD)
    return PNG_SIGNATURE + _png_chunk(b"IHDR", ihdr) + _png_chunk(b"IDAT", body) + _png_chunk(b"IEND", b"")


def text_bytes(rng: np.random.Generator, size: int) -> bytes:
    """Printable ASCII in 80-column lines."""
    buf = rng.integers(32, 127, size=size, dtype=np.uint8)
    buf[79::80] = ord("\n")
    return buf.tobytes()


def generate_corpus(
    out_dir: str | Path,
    category: str,
    count: int,
    size_min: int | None = None,
    size_max: int | None = None,
    seed: int = 0,
) -> CorpusManifest:
    """Write ``count`` files for ``category`` under ``out_dir/category`` and return their manifest."""
    cat_idx = _category_index(category)
    default_min, default_max = DEFAULT_RANGES[category]
    size_min = default_min if size_min is None else size_min
    size_max = default_max if size_max is None else size_max
    if count < 1:
        raise CorpusError("count must be at least 1")
    if size_min > size_max or size_min < 0:
        raise CorpusError(f"bad size range [{size_min}, {size_max}]")
    if not 0 <= seed < 1 << 64:
        raise CorpusError("seed must fit in 64 bits")
    root = Path(out_dir) / category
    root.mkdir(parents=True, exist_ok=True)
    size_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, cat_idx])))
    sizes = size_rng.integers(size_min, size_max, size=count, endpoint=True)
    make = image_bytes if category.startswith("image") else text_bytes
    files = []
    for i, size in enumerate(sizes):
        file_id = f"{category}-{i:04d}"
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, cat_idx, i])))
        data = make(rng, int(size))
        (root / f"{file_id}{suffix_for(category)}").write_bytes(data)
        files.append(CorpusFile(file_id, len(data), Fnv1a64(data).intdigest()))
    manifest = CorpusManifest(category, count, size_min, size_max, seed, tuple(files))
    (root / MANIFEST_NAME).write_text(manifest.to_json(), encoding="utf-8")
    return manifest


def load_manifest(corpus_dir: str | Path, category: str) -> CorpusManifest:
    return CorpusManifest.from_json((Path(corpus_dir) / category / MANIFEST_NAME).read_text(encoding="utf-8"))


_SYNTHETIC = {
    "LastName": ("Khan", "Memon", "Shah", "Ahmed", "Siddiqui", "Qureshi", "Baloch", "Ansari"),
    "FirstName": ("Ali", "Sara", "Bilal", "Ayesha", "Hamza", "Fatima", "Usman", "Zainab"),
    "Address": ("12 Canal Road", "4 Mall Avenue", "88 Station Street", "7 Jinnah Lane", "31 Park View"),
    "City": ("Jamshoro", "Hyderabad", "Karachi", "Lahore", "Hefei", "Sukkur"),
}


def _synthetic_value(prop_name: str, kind: str, max_length: int | None, index: int) -> Any:
    if kind == TEXT:
        choices = _SYNTHETIC.get(prop_name)
        value = choices[index % len(choices)] if choices else f"{prop_name}{index}"
        return value[:max_length] if max_length else value
    return index


def items_from_manifest(manifest: CorpusManifest, corpus_dir: str | Path, entity: EntityDef) -> list[MigrationItem]:
    """One item per corpus file: synthetic scalar columns plus the file in the category's blob column."""
    wanted = BINARY_BLOB if manifest.category.startswith("image") else TEXT_BLOB
    blob_prop = next((p.name for p in entity.blob_properties if p.kind == wanted), None)
    if blob_prop is None:
        raise CorpusError(f"entity {entity.name!r} has no {wanted} property for {manifest.category}")
    items = []
    for i, f in enumerate(manifest.files):
        scalars = {
            p.name: _synthetic_value(p.name, p.kind, p.max_length, i)
            for p in entity.scalar_properties
            if not p.is_key and not p.generated
        }
        items.append(MigrationItem(f.id, scalars, {blob_prop: manifest.path_for(Path(corpus_dir), f.id)}))
    return items
