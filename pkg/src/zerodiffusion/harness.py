"""Multi-seed experiment harness.

One experiment = one partition, one method, N repetitions. Repetition i runs
the full pipeline under root_seed + i with its own random streams and model
state, so repetitions are independent and order-insensitive. Reported
accuracy is micro-averaged top-1 over unseen-class records, scored against
unseen candidates only; a balanced (macro) variant sits behind a flag.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifier import (
    ClassifierTrainConfig,
    CompatibilityModel,
    batch_logits,
    train_classifier,
)
from .diffusion import DiffusionTrainConfig, generate_unseen, train_diffusion
from .embeddings import (
    ClassEmbedding,
    EmbeddingRecord,
    PartitionSpec,
    SynthConfig,
    builtin_partitions,
    class_map,
    dataset_stats,
    load_class_embeddings,
    load_feature_table,
    load_partition,
    synth_benchmark,
)
from .errors import ConfigError, DataError
from .numerics import Rng

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "ExperimentStageError",
    "FileData",
    "SyntheticData",
    "run_experiment",
    "run_single",
    "aggregate",
    "evaluate_model",
    "format_mean_std",
    "emit_report",
    "report_to_dict",
    "report_from_dict",
    "config_fingerprint",
]

_METHODS = ("zerodiffusion", "ale")
_FORMATS = ("text", "json", "markdown")

# Wall-clock fields are excluded when comparing reports for reproducibility.
WALL_CLOCK_FIELDS = ("wall_clock_seconds",)


@dataclass(frozen=True)
class FileData:
    """Feature/class files plus a partition, builtin ('dataset/name') or file."""

    features: str
    classes: str
    partition_file: str | None = None
    builtin: str | None = None

    def __post_init__(self) -> None:
        if (self.partition_file is None) == (self.builtin is None):
            raise ConfigError(
                "file data needs exactly one of 'partition_file' or 'builtin'"
            )


@dataclass(frozen=True)
class SyntheticData:
    config: SynthConfig = field(default_factory=SynthConfig)


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "zerodiffusion"
    repetitions: int = 10
    seed: int = 0
    data: FileData | SyntheticData = field(default_factory=SyntheticData)
    diffusion: DiffusionTrainConfig = field(default_factory=DiffusionTrainConfig)
    classifier: ClassifierTrainConfig | None = None
    generation_count: int | None = None
    balanced_accuracy: bool = False
    sample_std: bool = False
    output_dir: str | None = None
    format: str = "json"

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise ConfigError(f"unknown method '{self.method}'; use one of {_METHODS}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.generation_count is not None and self.generation_count < 0:
            raise ConfigError("generation_count must be non-negative")
        if self.format not in _FORMATS:
            raise ConfigError(f"unknown format '{self.format}'; use one of {_FORMATS}")

    def resolved_classifier(self) -> ClassifierTrainConfig:
        """Classifier config with method-dependent defaults filled in.

        The baseline method trains with the WARP ranking loss and weight decay
        1e-4; the diffusion method uses cross-entropy and 1e-5.
        """
        if self.classifier is not None:
            return self.classifier
        if self.method == "ale":
            return ClassifierTrainConfig(loss="warp", weight_decay=1e-4)
        return ClassifierTrainConfig(loss="cross_entropy", weight_decay=1e-5)


def _from_dict(cls, obj: dict, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(obj.keys() - names)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {unknown}")
    try:
        return cls(**obj)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad {where}: {exc}") from exc


def config_from_dict(obj: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from plain JSON data; unknown keys are rejected."""
    if not isinstance(obj, dict):
        raise ConfigError("experiment config must be a JSON object")
    obj = dict(obj)
    data = obj.pop("data", None)
    if data is not None:
        if not isinstance(data, dict):
            raise ConfigError("'data' must be a JSON object")
        data = dict(data)
        kind = data.pop("kind", None)
        if kind == "files":
            obj["data"] = _from_dict(FileData, data, "file data")
        elif kind == "synthetic":
            obj["data"] = SyntheticData(config=_from_dict(SynthConfig, data, "synthetic data"))
        else:
            raise ConfigError("'data.kind' must be 'files' or 'synthetic'")
    diffusion = obj.pop("diffusion", None)
    if diffusion is not None:
        if isinstance(diffusion, dict) and "weights" in diffusion:
            diffusion = dict(diffusion)
            from .diffusion import LossWeights

            diffusion["weights"] = _from_dict(
                LossWeights, diffusion["weights"], "loss weights"
            )
        obj["diffusion"] = _from_dict(DiffusionTrainConfig, diffusion, "diffusion config")
    clf = obj.pop("classifier", None)
    if clf is not None:
        obj["classifier"] = _from_dict(ClassifierTrainConfig, clf, "classifier config")
    return _from_dict(ExperimentConfig, obj, "experiment config")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON") from exc
    config = config_from_dict(obj)
    if isinstance(config.data, FileData):
        for label, candidate in (
            ("features", config.data.features),
            ("classes", config.data.classes),
            ("partition_file", config.data.partition_file),
        ):
            if candidate is not None and not Path(candidate).is_file():
                raise ConfigError(f"config references missing {label} file: {candidate}")
    return config


def config_to_dict(config: ExperimentConfig) -> dict:
    obj = dataclasses.asdict(config)
    if isinstance(config.data, FileData):
        obj["data"] = {"kind": "files", **dataclasses.asdict(config.data)}
    else:
        obj["data"] = {"kind": "synthetic", **dataclasses.asdict(config.data.config)}
    return obj


def config_fingerprint(config: ExperimentConfig) -> str:
    """Stable hash of the full configuration, for report provenance."""
    canon = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


@dataclass
class ExperimentReport:
    method: str
    partition: str
    seeds: list[int]
    accuracies: list[float]
    mean: float
    std: float
    std_kind: str
    balanced: bool
    stages: list[str]
    fingerprint: str
    wall_clock_seconds: list[float]


class ExperimentStageError(RuntimeError):
    """A pipeline stage failed; carries the seed, stage, and partial results."""

    def __init__(self, seed: int, stage: str, partial: list[float], cause: Exception):
        super().__init__(f"seed {seed}, stage '{stage}': {cause}")
        self.seed = seed
        self.stage = stage
        self.partial_accuracies = list(partial)


def _resolve_data(
    config: ExperimentConfig, rng: Rng
) -> tuple[list[EmbeddingRecord], list[ClassEmbedding], PartitionSpec]:
    if isinstance(config.data, SyntheticData):
        return synth_benchmark(config.data.config, rng.stream("benchmark"))
    records = load_feature_table(config.data.features)
    classes = load_class_embeddings(config.data.classes)
    if config.data.builtin is not None:
        sel = config.data.builtin
        if "/" not in sel:
            raise ConfigError(
                f"builtin partition selector '{sel}' must look like 'dataset/name'"
            )
        dataset, name = sel.split("/", 1)
        matches = [s for s in builtin_partitions(dataset) if s.name == name]
        if not matches:
            known = [s.name for s in builtin_partitions(dataset)]
            raise ConfigError(
                f"dataset '{dataset}' has no partition '{name}'; known: {known}"
            )
        partition = matches[0]
    else:
        partition = load_partition(config.data.partition_file)
    return records, classes, partition


def evaluate_model(
    model: CompatibilityModel,
    records: Sequence[EmbeddingRecord],
    candidates: Sequence[ClassEmbedding],
    balanced: bool = False,
) -> float:
    """Top-1 accuracy of records against the candidate classes only."""
    if not records:
        raise DataError("cannot evaluate on an empty record set")
    labels = [c.label for c in candidates]
    index = {label: i for i, label in enumerate(labels)}
    unknown = sorted({r.class_label for r in records} - index.keys())
    if unknown:
        raise DataError(f"evaluation records carry non-candidate classes: {unknown}")
    matrix = np.stack([np.asarray(c.vector, dtype=np.float64) for c in candidates])
    feats = np.stack([np.asarray(r.vector, dtype=np.float64) for r in records])
    truth = np.array([index[r.class_label] for r in records])
    predictions = np.argmax(batch_logits(model, feats, matrix), axis=1)
    correct = predictions == truth
    if not balanced:
        return float(correct.mean())
    recalls = [float(correct[truth == i].mean()) for i in range(len(labels))
               if np.any(truth == i)]
    return float(np.mean(recalls))


def _default_generation_count(records: Sequence[EmbeddingRecord]) -> int:
    stats = dataset_stats(records)
    return max(1, round(stats.average_samples_per_class))


def run_single(config: ExperimentConfig, seed: int) -> tuple[float, list[str]]:
    """One full pipeline run under one seed; returns (accuracy, stage trace)."""
    rng = Rng(seed)
    records, classes, partition = _resolve_data(config, rng)
    seen_set = set(partition.seen_classes)
    unseen_set = set(partition.unseen_classes)
    seen_records = [r for r in records if r.class_label in seen_set]
    unseen_records = [r for r in records if r.class_label in unseen_set]
    if not seen_records:
        raise DataError(f"partition '{partition.name}' matches no seen records")
    if not unseen_records:
        raise DataError(f"partition '{partition.name}' matches no unseen records")
    lookup = class_map(classes)
    missing = [l for l in (*partition.seen_classes, *partition.unseen_classes)
               if l not in lookup]
    if missing:
        raise DataError(f"no class embedding for partition classes: {missing}")
    unseen_classes = [c for c in classes if c.label in unseen_set]

    stages: list[str] = []
    synthetic: list[EmbeddingRecord] = []
    use_diffusion = config.method == "zerodiffusion" and config.generation_count != 0
    if use_diffusion:
        model, _trace = train_diffusion(seen_records, lookup, config.diffusion, rng)
        stages.append("train_diffusion")
        count = (
            config.generation_count
            if config.generation_count is not None
            else _default_generation_count(records)
        )
        synthetic = generate_unseen(
            model,
            unseen_classes,
            count,
            rng.stream("generate"),
            noise_std=config.diffusion.gen_noise_std,
            refine_steps=config.diffusion.refine_steps,
        )
        stages.append("generate")
    clf = train_classifier(
        seen_records, synthetic, lookup, config.resolved_classifier(), rng
    )
    stages.append("train_classifier")
    accuracy = evaluate_model(
        clf, unseen_records, unseen_classes, balanced=config.balanced_accuracy
    )
    stages.append("evaluate")
    return accuracy, stages


def aggregate(accuracies: Sequence[float], sample_std: bool = False) -> tuple[float, float]:
    """Mean and standard deviation of per-seed accuracies.

    Population std by default; the sample (n-1) variant is one flag away and
    needs at least two values.
    """
    if not accuracies:
        raise DataError("cannot aggregate zero accuracies")
    values = np.asarray(accuracies, dtype=np.float64)
    if sample_std:
        if values.size < 2:
            raise DataError("sample std needs at least two repetitions")
        return float(values.mean()), float(values.std(ddof=1))
    return float(values.mean()), float(values.std())


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run all repetitions and aggregate. Seeds are root_seed + i."""
    seeds = [config.seed + i for i in range(config.repetitions)]
    accuracies: list[float] = []
    clocks: list[float] = []
    stages: list[str] = []
    for seed in seeds:
        begin = time.perf_counter()
        try:
            accuracy, trace = run_single(config, seed)
        except Exception as exc:
            stage = getattr(exc, "stage", "pipeline")
            raise ExperimentStageError(seed, stage, accuracies, exc) from exc
        clocks.append(time.perf_counter() - begin)
        accuracies.append(accuracy)
        if not stages:
            stages = trace
        elif stages != trace:
            raise ExperimentStageError(
                seed, "pipeline", accuracies,
                RuntimeError(f"stage trace diverged across seeds: {stages} vs {trace}"),
            )
    mean, std = aggregate(accuracies, sample_std=config.sample_std)
    partition_name = (
        "synthetic" if isinstance(config.data, SyntheticData)
        else (config.data.builtin or Path(config.data.partition_file).stem)
    )
    return ExperimentReport(
        method=config.method,
        partition=partition_name,
        seeds=seeds,
        accuracies=accuracies,
        mean=mean,
        std=std,
        std_kind="sample" if config.sample_std else "population",
        balanced=config.balanced_accuracy,
        stages=stages,
        fingerprint=config_fingerprint(config),
        wall_clock_seconds=clocks,
    )


def format_mean_std(mean: float, std: float) -> str:
    """Four-decimal 'mean ± std' cell, e.g. '0.3138 ± 0.0132'."""
    return f"{mean:.4f} ± {std:.4f}"


def report_to_dict(report: ExperimentReport) -> dict:
    return dataclasses.asdict(report)


def report_from_dict(obj: dict) -> ExperimentReport:
    names = {f.name for f in dataclasses.fields(ExperimentReport)}
    unknown = sorted(obj.keys() - names)
    if unknown:
        raise ConfigError(f"unknown report keys: {unknown}")
    return ExperimentReport(**obj)


def _render_text(reports: Sequence[ExperimentReport]) -> str:
    lines = []
    for r in reports:
        lines.append(
            f"{r.partition} {r.method} ({len(r.accuracies)} runs): "
            f"{format_mean_std(r.mean, r.std)}"
        )
    return "\n".join(lines) + "\n"


def _render_markdown(reports: Sequence[ExperimentReport]) -> str:
    lines = [
        "| partition | method | runs | top-1 accuracy |",
        "| --- | --- | --- | --- |",
    ]
    for r in reports:
        lines.append(
            f"| {r.partition} | {r.method} | {len(r.accuracies)} | "
            f"{format_mean_std(r.mean, r.std)} |"
        )
    return "\n".join(lines) + "\n"


def emit_report(
    reports: ExperimentReport | Sequence[ExperimentReport],
    format: str,
    path: str | Path,
) -> Path:
    """Write one or more reports as text, json, or a markdown table."""
    if isinstance(reports, ExperimentReport):
        many = [reports]
        single = True
    else:
        many = list(reports)
        single = False
    if format not in _FORMATS:
        raise ConfigError(f"unknown report format '{format}'; use one of {_FORMATS}")
    path = Path(path)
    if format == "json":
        payload = report_to_dict(many[0]) if single else [report_to_dict(r) for r in many]
        path.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    elif format == "text":
        path.write_text(_render_text(many), encoding="utf-8")
    else:
        path.write_text(_render_markdown(many), encoding="utf-8")
    return path
