"""Interchange formats and dataset plumbing.

Three file formats tie the pipeline together:

* feature tables: JSON Lines, one record per line,
  ``{"id": ..., "class": ..., "vector": [...]}``, with an optional binary
  sibling (magic ``ZDEM``) for bulk data;
* class embeddings: JSON Lines, ``{"label": ..., "synonyms": [...],
  "vector": [...]}``;
* partitions: a single JSON object ``{"name": ..., "seen": [...],
  "unseen": [...]}``.

The module also ships the built-in seen/unseen partition tables for the six
supported audio datasets and a synthetic Gaussian-cluster benchmark used by
the test harness.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, FormatError

__all__ = [
    "EmbeddingRecord",
    "ClassEmbedding",
    "PartitionSpec",
    "DatasetStats",
    "SynthConfig",
    "load_feature_table",
    "write_feature_table",
    "load_class_embeddings",
    "write_class_embeddings",
    "load_partition",
    "write_partition",
    "class_vector",
    "class_map",
    "builtin_datasets",
    "builtin_partitions",
    "dataset_label_universe",
    "dataset_stats",
    "synth_benchmark",
]

_MAGIC = b"ZDEM"
_BINARY_VERSION = 1


@dataclass
class EmbeddingRecord:
    """One clip-level feature embedding with its ground-truth class label."""

    id: str
    class_label: str
    vector: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.class_label == other.class_label
            and np.array_equal(self.vector, other.vector)
        )


@dataclass
class ClassEmbedding:
    """A class label, its synonym list, and its semantic vector."""

    label: str
    synonyms: list[str]
    vector: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClassEmbedding):
            return NotImplemented
        return (
            self.label == other.label
            and self.synonyms == other.synonyms
            and np.array_equal(self.vector, other.vector)
        )


@dataclass(frozen=True)
class PartitionSpec:
    """Disjoint seen/unseen class label sets for one experiment."""

    name: str
    seen_classes: tuple[str, ...]
    unseen_classes: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.seen_classes or not self.unseen_classes:
            raise DataError(f"partition '{self.name}' has an empty class side")
        overlap = set(self.seen_classes) & set(self.unseen_classes)
        if overlap:
            raise DataError(
                f"partition '{self.name}' has overlapping seen/unseen classes: "
                f"{sorted(overlap)}"
            )


@dataclass(frozen=True)
class DatasetStats:
    """Per-class sample counts for a loaded feature table."""

    class_count: int
    samples_per_class: dict[str, int]
    average_samples_per_class: float


def _vector_from_json(raw: object, where: str) -> np.ndarray:
    if not isinstance(raw, list) or not raw:
        raise FormatError(f"{where}: 'vector' must be a non-empty list of numbers")
    try:
        vec = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: 'vector' has non-numeric entries") from exc
    if vec.ndim != 1:
        raise FormatError(f"{where}: 'vector' must be flat")
    if not np.all(np.isfinite(vec)):
        raise FormatError(f"{where}: 'vector' contains non-finite values")
    return vec


def _check_keys(obj: dict, required: set[str], where: str) -> None:
    missing = required - obj.keys()
    if missing:
        raise FormatError(f"{where}: missing fields {sorted(missing)}")
    extra = obj.keys() - required
    if extra:
        raise FormatError(f"{where}: unexpected fields {sorted(extra)}")


def load_feature_table(path: str | Path) -> list[EmbeddingRecord]:
    """Read a feature table, sniffing JSONL versus the binary sibling format.

    Every record must carry the same vector dimensionality and finite values;
    violations are reported with the offending record id.
    """
    path = Path(path)
    with open(path, "rb") as handle:
        head = handle.read(4)
    if head == _MAGIC:
        return _load_feature_binary(path)
    return _load_feature_jsonl(path)


def _load_feature_jsonl(path: Path) -> list[EmbeddingRecord]:
    records: list[EmbeddingRecord] = []
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: not valid JSON") from exc
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: record must be a JSON object")
            _check_keys(obj, {"id", "class", "vector"}, f"{path}:{lineno}")
            rid = obj["id"]
            label = obj["class"]
            if not isinstance(rid, str) or not isinstance(label, str):
                raise FormatError(f"{path}:{lineno}: 'id' and 'class' must be strings")
            vec = _vector_from_json(obj["vector"], f"record '{rid}'")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise FormatError(
                    f"record '{rid}' has dimension {vec.shape[0]}, expected {dim}"
                )
            records.append(EmbeddingRecord(id=rid, class_label=label, vector=vec))
    return records


def _load_feature_binary(path: Path) -> list[EmbeddingRecord]:
    blob = path.read_bytes()
    header = struct.Struct("<4sHIQ")
    if len(blob) < header.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, dim, count = header.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _BINARY_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = header.size
    records: list[EmbeddingRecord] = []
    u16 = struct.Struct("<H")
    for index in range(count):
        try:
            (id_len,) = u16.unpack_from(blob, offset)
            offset += u16.size
            rid = blob[offset : offset + id_len].decode("utf-8")
            offset += id_len
            (label_len,) = u16.unpack_from(blob, offset)
            offset += u16.size
            label = blob[offset : offset + label_len].decode("utf-8")
            offset += label_len
            vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).copy()
            offset += 4 * dim
        except (struct.error, UnicodeDecodeError) as exc:
            raise FormatError(f"{path}: truncated or corrupt record {index}") from exc
        if vec.shape[0] != dim:
            raise FormatError(f"{path}: truncated vector in record '{rid}'")
        if not np.all(np.isfinite(vec)):
            raise FormatError(f"record '{rid}': 'vector' contains non-finite values")
        records.append(EmbeddingRecord(id=rid, class_label=label, vector=vec))
    return records


def write_feature_table(
    records: Sequence[EmbeddingRecord], path: str | Path, binary: bool = False
) -> None:
    """Write a feature table as JSONL, or as the binary sibling when asked.

    JSONL serialization round-trips float64 vectors bit-exactly; the binary
    format stores 32-bit floats.
    """
    path = Path(path)
    dims = {len(r.vector) for r in records}
    if len(dims) > 1:
        raise DataError(f"records carry mixed vector dimensions: {sorted(dims)}")
    if binary:
        dim = dims.pop() if dims else 0
        parts = [struct.pack("<4sHIQ", _MAGIC, _BINARY_VERSION, dim, len(records))]
        for r in records:
            rid = r.id.encode("utf-8")
            label = r.class_label.encode("utf-8")
            parts.append(struct.pack("<H", len(rid)))
            parts.append(rid)
            parts.append(struct.pack("<H", len(label)))
            parts.append(label)
            parts.append(np.asarray(r.vector, dtype="<f4").tobytes())
        path.write_bytes(b"".join(parts))
        return
    with open(path, "w", encoding="utf-8") as handle:
        for r in records:
            obj = {"id": r.id, "class": r.class_label, "vector": list(map(float, r.vector))}
            handle.write(json.dumps(obj) + "\n")


def load_class_embeddings(path: str | Path) -> list[ClassEmbedding]:
    """Read a class-embedding JSONL file; labels must be unique."""
    path = Path(path)
    out: list[ClassEmbedding] = []
    seen_labels: set[str] = set()
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: not valid JSON") from exc
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: record must be a JSON object")
            _check_keys(obj, {"label", "synonyms", "vector"}, f"{path}:{lineno}")
            label = obj["label"]
            synonyms = obj["synonyms"]
            if not isinstance(label, str):
                raise FormatError(f"{path}:{lineno}: 'label' must be a string")
            if not isinstance(synonyms, list) or not all(
                isinstance(s, str) for s in synonyms
            ):
                raise FormatError(f"class '{label}': 'synonyms' must be a list of strings")
            if label in seen_labels:
                raise FormatError(f"class '{label}' appears more than once")
            seen_labels.add(label)
            vec = _vector_from_json(obj["vector"], f"class '{label}'")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise FormatError(
                    f"class '{label}' has dimension {vec.shape[0]}, expected {dim}"
                )
            out.append(ClassEmbedding(label=label, synonyms=list(synonyms), vector=vec))
    return out


def write_class_embeddings(classes: Sequence[ClassEmbedding], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for c in classes:
            obj = {
                "label": c.label,
                "synonyms": list(c.synonyms),
                "vector": list(map(float, c.vector)),
            }
            handle.write(json.dumps(obj) + "\n")


def load_partition(path: str | Path) -> PartitionSpec:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON") from exc
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: partition must be a JSON object")
    _check_keys(obj, {"name", "seen", "unseen"}, str(path))
    for key in ("seen", "unseen"):
        if not isinstance(obj[key], list) or not all(isinstance(s, str) for s in obj[key]):
            raise FormatError(f"{path}: '{key}' must be a list of strings")
    return PartitionSpec(
        name=str(obj["name"]),
        seen_classes=tuple(obj["seen"]),
        unseen_classes=tuple(obj["unseen"]),
    )


def write_partition(spec: PartitionSpec, path: str | Path) -> None:
    obj = {
        "name": spec.name,
        "seen": list(spec.seen_classes),
        "unseen": list(spec.unseen_classes),
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def class_vector(cls: ClassEmbedding, word_lookup: Mapping[str, np.ndarray]) -> np.ndarray:
    """Semantic vector for a class: flat mean over all label and synonym tokens.

    Multi-word labels and synonyms are split on whitespace, every token is
    looked up, and the token vectors are averaged in one flat mean. Tokens
    absent from the lookup raise a DataError listing all of them.
    """
    tokens = cls.label.split()
    for synonym in cls.synonyms:
        tokens.extend(synonym.split())
    if not tokens:
        raise DataError(f"class '{cls.label}' has no tokens to embed")
    missing = sorted({t for t in tokens if t not in word_lookup})
    if missing:
        raise DataError(
            f"class '{cls.label}' has tokens with no word vector: {missing}"
        )
    stacked = np.stack([np.asarray(word_lookup[t], dtype=np.float64) for t in tokens])
    return stacked.mean(axis=0)


def class_map(classes: Sequence[ClassEmbedding]) -> dict[str, np.ndarray]:
    """Label -> vector mapping for quick lookups."""
    return {c.label: c.vector for c in classes}


def _partition_tables() -> dict:
    data = resources.files("zerodiffusion.data").joinpath("partitions.json")
    return json.loads(data.read_text(encoding="utf-8"))


def builtin_datasets() -> list[str]:
    return sorted(_partition_tables().keys())


def dataset_label_universe(dataset: str) -> list[str]:
    """Canonical ordered label list for a built-in dataset.

    Numeric class ids in the shipped partition tables index into this list.
    """
    tables = _partition_tables()
    if dataset not in tables:
        raise DataError(
            f"unknown dataset '{dataset}'; known datasets: {sorted(tables.keys())}"
        )
    return list(tables[dataset]["labels"])


def builtin_partitions(dataset: str) -> list[PartitionSpec]:
    """Built-in seen/unseen partitions for one dataset.

    Each named holdout's classes form the unseen set and every other class in
    the dataset's label universe is seen. Holdout entries are either indices
    into the label universe or literal label strings.
    """
    tables = _partition_tables()
    if dataset not in tables:
        raise DataError(
            f"unknown dataset '{dataset}'; known datasets: {sorted(tables.keys())}"
        )
    labels = tables[dataset]["labels"]
    specs: list[PartitionSpec] = []
    for name, entries in tables[dataset]["holdouts"].items():
        unseen: list[str] = []
        for entry in entries:
            if isinstance(entry, int):
                if not 0 <= entry < len(labels):
                    raise DataError(
                        f"{dataset}/{name}: class index {entry} outside label universe"
                    )
                unseen.append(labels[entry])
            else:
                if entry not in labels:
                    raise DataError(
                        f"{dataset}/{name}: class '{entry}' not in label universe"
                    )
                unseen.append(entry)
        unseen_set = set(unseen)
        seen = tuple(l for l in labels if l not in unseen_set)
        specs.append(
            PartitionSpec(name=name, seen_classes=seen, unseen_classes=tuple(unseen))
        )
    return specs


def dataset_stats(records: Sequence[EmbeddingRecord]) -> DatasetStats:
    """Class count, per-class sample counts, and their mean."""
    if not records:
        raise DataError("cannot compute statistics of an empty feature table")
    counts: dict[str, int] = {}
    for r in records:
        counts[r.class_label] = counts.get(r.class_label, 0) + 1
    total = sum(counts.values())
    return DatasetStats(
        class_count=len(counts),
        samples_per_class=counts,
        average_samples_per_class=total / len(counts),
    )


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic Gaussian-cluster benchmark.

    Feature clusters sit at uniform centroids inside
    (-centroid_span, +centroid_span) per coordinate; class embeddings are a
    fixed random linear image of the centroids plus coupling noise, so the
    class space genuinely predicts the feature space.
    """

    seen_classes: int = 8
    unseen_classes: int = 2
    samples_per_class: int = 100
    feature_dim: int = 128
    class_dim: int = 32
    feature_noise: float = 0.1
    coupling_noise: float = 0.02
    centroid_span: float = 0.8

    def __post_init__(self) -> None:
        if self.seen_classes < 2 or self.unseen_classes < 2:
            raise ConfigError(
                "synthetic benchmark needs at least 2 seen and 2 unseen classes"
            )
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be positive")
        if self.feature_dim < 1 or self.class_dim < 1:
            raise ConfigError("feature_dim and class_dim must be positive")
        if self.feature_noise < 0 or self.coupling_noise < 0:
            raise ConfigError("noise levels must be non-negative")
        if not 0.0 < self.centroid_span < 1.0:
            raise ConfigError("centroid_span must be in (0, 1)")


def _synth_benchmark_full(
    config: SynthConfig, rng: np.random.Generator
) -> tuple[list[EmbeddingRecord], list[ClassEmbedding], PartitionSpec, np.ndarray]:
    """Benchmark generator that also returns the coupling map, for oracles."""
    total = config.seen_classes + config.unseen_classes
    labels = [f"class_{i:02d}" for i in range(total)]
    centroids = rng.uniform(
        -config.centroid_span, config.centroid_span, size=(total, config.feature_dim)
    )
    coupling = rng.normal(
        0.0, 1.0 / np.sqrt(config.feature_dim), size=(config.feature_dim, config.class_dim)
    )
    class_vecs = centroids @ coupling
    if config.coupling_noise > 0:
        class_vecs = class_vecs + rng.normal(
            0.0, config.coupling_noise, size=class_vecs.shape
        )
    records: list[EmbeddingRecord] = []
    for c, label in enumerate(labels):
        noise = rng.normal(
            0.0, config.feature_noise, size=(config.samples_per_class, config.feature_dim)
        ) if config.feature_noise > 0 else np.zeros(
            (config.samples_per_class, config.feature_dim)
        )
        block = centroids[c] + noise
        for j in range(config.samples_per_class):
            records.append(
                EmbeddingRecord(
                    id=f"{label}_{j:04d}", class_label=label, vector=block[j].copy()
                )
            )
    classes = [
        ClassEmbedding(label=labels[c], synonyms=[], vector=class_vecs[c].copy())
        for c in range(total)
    ]
    spec = PartitionSpec(
        name="synthetic",
        seen_classes=tuple(labels[: config.seen_classes]),
        unseen_classes=tuple(labels[config.seen_classes :]),
    )
    return records, classes, spec, coupling


def synth_benchmark(
    config: SynthConfig, rng: np.random.Generator
) -> tuple[list[EmbeddingRecord], list[ClassEmbedding], PartitionSpec]:
    """Generate a synthetic benchmark: feature table, class embeddings, partition."""
    records, classes, spec, _ = _synth_benchmark_full(config, rng)
    return records, classes, spec
