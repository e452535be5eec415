"""Extraction manifests: one JSON file describing a whole extraction job.

Relative paths inside a manifest resolve against the manifest file's own
directory, so a job directory can be moved or mounted anywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

CLASS_DIM = 300
FEATURE_DIM = 128


@dataclass(frozen=True)
class AudioEntry:
    path: str
    class_label: str
    id: str


@dataclass(frozen=True)
class ExtractionManifest:
    dataset: str
    word_embeddings: str
    class_output: str
    feature_output: str
    audio: tuple[AudioEntry, ...] = ()
    classes: tuple[str, ...] = ()
    synonyms: str | None = None

    def class_labels(self) -> list[str]:
        """All labels to embed, in manifest order: the explicit `classes`
        list first (unseen classes have no audio, so they must be listable
        here), then audio labels by first appearance."""
        out: list[str] = []
        seen: set[str] = set()
        for label in self.classes:
            if label not in seen:
                out.append(label)
                seen.add(label)
        for entry in self.audio:
            if entry.class_label not in seen:
                out.append(entry.class_label)
                seen.add(entry.class_label)
        return out


_REQUIRED = ("dataset", "word_embeddings", "class_output", "feature_output")
_OPTIONAL = ("audio", "classes", "synonyms")
_AUDIO_KEYS = {"path", "class", "id"}


def _resolve(base: Path, value: str) -> str:
    path = Path(value)
    return str(path if path.is_absolute() else base / path)


def manifest_from_dict(obj: dict, base_dir: str | Path = ".") -> ExtractionManifest:
    if not isinstance(obj, dict):
        raise ConfigError("manifest must be a JSON object")
    unknown = sorted(obj.keys() - set(_REQUIRED) - set(_OPTIONAL))
    if unknown:
        raise ConfigError(f"unknown manifest keys: {unknown}")
    missing = [key for key in _REQUIRED if key not in obj]
    if missing:
        raise ConfigError(f"manifest is missing required keys: {missing}")
    base = Path(base_dir)

    entries: list[AudioEntry] = []
    for i, raw in enumerate(obj.get("audio", [])):
        if not isinstance(raw, dict):
            raise ConfigError(f"audio entry {i} must be a JSON object")
        unknown = sorted(raw.keys() - _AUDIO_KEYS)
        if unknown:
            raise ConfigError(f"audio entry {i} has unknown keys: {unknown}")
        if "path" not in raw or "class" not in raw:
            raise ConfigError(f"audio entry {i} needs 'path' and 'class'")
        entries.append(AudioEntry(
            path=_resolve(base, str(raw["path"])),
            class_label=str(raw["class"]),
            id=str(raw.get("id") or Path(str(raw["path"])).stem),
        ))
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        dupes = sorted({x for x in ids if ids.count(x) > 1})
        raise ConfigError(f"duplicate audio ids in manifest: {dupes}")

    classes = obj.get("classes", [])
    if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
        raise ConfigError("'classes' must be a list of label strings")

    synonyms = obj.get("synonyms")
    return ExtractionManifest(
        dataset=str(obj["dataset"]),
        word_embeddings=_resolve(base, str(obj["word_embeddings"])),
        class_output=_resolve(base, str(obj["class_output"])),
        feature_output=_resolve(base, str(obj["feature_output"])),
        audio=tuple(entries),
        classes=tuple(classes),
        synonyms=_resolve(base, str(synonyms)) if synonyms is not None else None,
    )


def load_manifest(path: str | Path) -> ExtractionManifest:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"manifest file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON") from exc
    return manifest_from_dict(obj, base_dir=path.parent)


def load_synonyms(path: str | Path | None) -> dict[str, list[str]]:
    """Label -> synonym list. A missing path means no synonyms anywhere."""
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"synonym file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: synonym file must map label -> list of strings")
    out: dict[str, list[str]] = {}
    for label, values in obj.items():
        if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
            raise ConfigError(f"{path}: synonyms for '{label}' must be a list of strings")
        out[str(label)] = list(values)
    return out
