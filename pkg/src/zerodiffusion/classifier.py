"""Compatibility classifiers scoring (feature, class embedding) pairs.

Two bias-free variants:

* nonlinear: score = tanh(w @ A) @ B @ z with hidden width H;
* bilinear: score = w @ W @ z.

Training minimizes either softmax cross-entropy or a WARP ranking loss over
the class universe present in the training table. Zero-shot evaluation later
scores only unseen candidate classes; scores are linear in z, so rescaling
all candidates never changes the ranking.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import ClassEmbedding, EmbeddingRecord, class_map
from .errors import DataError, DimensionError, FormatError, NumericalError
from .numerics import AdamState, Rng, adam_step, init_affine

__all__ = [
    "CompatibilityModel",
    "ClassifierTrainConfig",
    "score",
    "logits",
    "batch_logits",
    "cross_entropy_loss",
    "warp_loss",
    "train_classifier",
    "predict_top1",
    "save_compatibility_model",
    "load_compatibility_model",
]

_CKPT_MAGIC = b"ZDCM"
_CKPT_VERSION = 1
_VARIANTS = ("nonlinear", "bilinear")


@dataclass
class CompatibilityModel:
    """Bias-free compatibility scorer; exactly one weight layout per variant."""

    variant: str
    a: np.ndarray | None = None  # (feature_dim, hidden), nonlinear only
    b: np.ndarray | None = None  # (hidden, class_dim), nonlinear only
    w: np.ndarray | None = None  # (feature_dim, class_dim), bilinear only

    def __post_init__(self) -> None:
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant '{self.variant}'; use one of {_VARIANTS}")
        if self.variant == "nonlinear" and (self.a is None or self.b is None):
            raise ValueError("nonlinear variant needs both 'a' and 'b' matrices")
        if self.variant == "bilinear" and self.w is None:
            raise ValueError("bilinear variant needs the 'w' matrix")

    @property
    def feature_dim(self) -> int:
        return self.a.shape[0] if self.variant == "nonlinear" else self.w.shape[0]

    @property
    def class_dim(self) -> int:
        return self.b.shape[1] if self.variant == "nonlinear" else self.w.shape[1]

    @classmethod
    def init_nonlinear(
        cls,
        feature_dim: int,
        class_dim: int,
        rng: np.random.Generator,
        hidden_dim: int = 300,
    ) -> "CompatibilityModel":
        a, _ = init_affine(rng, feature_dim, hidden_dim)
        b, _ = init_affine(rng, hidden_dim, class_dim)
        return cls(variant="nonlinear", a=a, b=b)

    @classmethod
    def init_bilinear(
        cls, feature_dim: int, class_dim: int, rng: np.random.Generator
    ) -> "CompatibilityModel":
        w, _ = init_affine(rng, feature_dim, class_dim)
        return cls(variant="bilinear", w=w)

    def params(self) -> dict[str, np.ndarray]:
        if self.variant == "nonlinear":
            return {"a": self.a, "b": self.b}
        return {"w": self.w}


def batch_logits(
    model: CompatibilityModel, features: np.ndarray, classes: np.ndarray
) -> np.ndarray:
    """Scores for every (feature row, class row) pair: (n, dim_f) x (c, dim_z) -> (n, c)."""
    features = np.asarray(features)
    classes = np.asarray(classes)
    if features.ndim != 2 or classes.ndim != 2:
        raise DimensionError("batch_logits expects 2-D feature and class matrices")
    if features.shape[1] != model.feature_dim or classes.shape[1] != model.class_dim:
        raise DimensionError(
            f"model expects dims ({model.feature_dim}, {model.class_dim}), got "
            f"({features.shape[1]}, {classes.shape[1]})"
        )
    if model.variant == "nonlinear":
        return np.tanh(features @ model.a) @ model.b @ classes.T
    return features @ model.w @ classes.T


def logits(
    model: CompatibilityModel, feature: np.ndarray, classes: np.ndarray
) -> np.ndarray:
    """Score vector of one feature against a (c, class_dim) candidate matrix."""
    feature = np.asarray(feature)
    if feature.ndim != 1:
        raise DimensionError(f"feature must be a vector, got shape {feature.shape}")
    return batch_logits(model, feature[None, :], classes)[0]


def score(
    model: CompatibilityModel, feature: np.ndarray, class_vec: np.ndarray
) -> float:
    """Compatibility of one (feature, class embedding) pair."""
    class_vec = np.asarray(class_vec)
    if class_vec.ndim != 1:
        raise DimensionError(f"class vector must be 1-D, got shape {class_vec.shape}")
    return float(logits(model, feature, class_vec[None, :])[0])


def _logits_backward(
    model: CompatibilityModel,
    features: np.ndarray,
    classes: np.ndarray,
    grad_logits: np.ndarray,
) -> dict[str, np.ndarray]:
    if model.variant == "nonlinear":
        hidden = np.tanh(features @ model.a)
        grad_hb = grad_logits @ classes  # d loss / d (hidden @ b)
        grad_b = hidden.T @ grad_hb
        grad_hidden = grad_hb @ model.b.T
        grad_pre = grad_hidden * (1.0 - hidden * hidden)
        grad_a = features.T @ grad_pre
        return {"a": grad_a, "b": grad_b}
    return {"w": features.T @ (grad_logits @ classes)}


def cross_entropy_loss(
    logit_rows: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient with respect to the logits.

    Stabilized by per-row max subtraction; uniform logits over c classes give
    exactly ln(c).
    """
    logit_rows = np.asarray(logit_rows, dtype=np.float64)
    targets = np.asarray(targets)
    if logit_rows.ndim != 2 or targets.shape != (logit_rows.shape[0],):
        raise DimensionError("cross_entropy_loss expects (n, c) logits and (n,) targets")
    n, c = logit_rows.shape
    if np.any(targets < 0) or np.any(targets >= c):
        raise DataError("target index outside the class universe")
    shifted = logit_rows - logit_rows.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    loss = float(-log_probs[np.arange(n), targets].mean())
    grad = exp / total
    grad[np.arange(n), targets] -= 1.0
    return loss, grad / n


def _rank_weights(c: int) -> np.ndarray:
    # weight(rank) = sum_{k=1..rank} 1/k, indexable by rank.
    w = np.zeros(c)
    w[1:] = np.cumsum(1.0 / np.arange(1, c))
    return w


def warp_loss(
    logit_rows: np.ndarray, targets: np.ndarray, rng: np.random.Generator
) -> tuple[float, np.ndarray]:
    """Weighted approximate-rank pairwise loss and its gradient.

    Per sample, rival classes are scanned in random order until one violates
    the margin (1 + s_rival - s_true > 0). The rank is estimated as
    (c - 1) // draws and the violation is weighted by sum_{k<=rank} 1/k. A
    sample whose true score clears every rival by the margin contributes 0.
    """
    logit_rows = np.asarray(logit_rows, dtype=np.float64)
    targets = np.asarray(targets)
    if logit_rows.ndim != 2 or targets.shape != (logit_rows.shape[0],):
        raise DimensionError("warp_loss expects (n, c) logits and (n,) targets")
    n, c = logit_rows.shape
    if c < 2:
        raise DataError("warp loss needs at least 2 classes")
    if np.any(targets < 0) or np.any(targets >= c):
        raise DataError("target index outside the class universe")
    weights = _rank_weights(c)
    loss = 0.0
    grad = np.zeros_like(logit_rows)
    for i in range(n):
        t = int(targets[i])
        s_true = logit_rows[i, t]
        rivals = np.delete(np.arange(c), t)
        order = rng.permutation(rivals)
        for draws, rival in enumerate(order, start=1):
            margin = 1.0 + logit_rows[i, rival] - s_true
            if margin > 0.0:
                rank = (c - 1) // draws
                w = weights[rank]
                loss += w * margin
                grad[i, rival] += w
                grad[i, t] -= w
                break
    return loss / n, grad / n


@dataclass(frozen=True)
class ClassifierTrainConfig:
    loss: str = "cross_entropy"  # "cross_entropy" | "warp"
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 64
    epochs: int = 10
    variant: str = "nonlinear"
    hidden_dim: int = 300
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.loss not in ("cross_entropy", "warp"):
            raise ValueError(f"unknown loss '{self.loss}'")
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant '{self.variant}'")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("bad classifier training hyperparameters")
        if self.weight_decay < 0 or self.hidden_dim < 1:
            raise ValueError("bad classifier training hyperparameters")


def train_classifier(
    seen_records: Sequence[EmbeddingRecord],
    synthetic_records: Sequence[EmbeddingRecord],
    classes: Sequence[ClassEmbedding] | Mapping[str, np.ndarray],
    config: ClassifierTrainConfig,
    rng: Rng | None = None,
) -> CompatibilityModel:
    """Train a compatibility model on real plus (possibly empty) synthetic records.

    The class universe is the lexicographically sorted set of labels present
    in the combined table; every label needs a class embedding.
    """
    combined = list(seen_records) + list(synthetic_records)
    if not combined:
        raise DataError("cannot train the classifier on an empty record set")
    if rng is None:
        rng = Rng(config.seed if config.seed is not None else 0)
    lookup = classes if isinstance(classes, Mapping) else class_map(classes)
    universe = sorted({r.class_label for r in combined})
    missing = [label for label in universe if label not in lookup]
    if missing:
        raise DataError(f"no class embedding for classes: {missing}")
    class_matrix = np.stack(
        [np.asarray(lookup[label], dtype=np.float64) for label in universe]
    )
    index = {label: i for i, label in enumerate(universe)}
    feats = np.stack([np.asarray(r.vector, dtype=np.float64) for r in combined])
    targets = np.array([index[r.class_label] for r in combined])

    init_rng = rng.stream("classifier", "init")
    if config.variant == "nonlinear":
        model = CompatibilityModel.init_nonlinear(
            feats.shape[1], class_matrix.shape[1], init_rng, config.hidden_dim
        )
    else:
        model = CompatibilityModel.init_bilinear(
            feats.shape[1], class_matrix.shape[1], init_rng
        )
    state = AdamState.for_params(
        model.params(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    shuffle_rng = rng.stream("classifier", "shuffle")
    warp_rng = rng.stream("classifier", "warp")

    n = feats.shape[0]
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_feats = feats[idx]
            batch_targets = targets[idx]
            rows = batch_logits(model, batch_feats, class_matrix)
            if config.loss == "cross_entropy":
                loss, grad_rows = cross_entropy_loss(rows, batch_targets)
            else:
                loss, grad_rows = warp_loss(rows, batch_targets, warp_rng)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite classifier loss at epoch {epoch}, batch at {start}"
                )
            grads = _logits_backward(model, batch_feats, class_matrix, grad_rows)
            adam_step(model.params(), grads, state)
    return model


def predict_top1(
    model: CompatibilityModel,
    feature: np.ndarray,
    candidates: Sequence[ClassEmbedding],
) -> str:
    """Label of the highest-scoring candidate; exact ties pick the lowest index."""
    if not candidates:
        raise DataError("predict_top1 needs at least one candidate class")
    matrix = np.stack([np.asarray(c.vector, dtype=np.float64) for c in candidates])
    scores = logits(model, np.asarray(feature, dtype=np.float64), matrix)
    return candidates[int(np.argmax(scores))].label


def save_compatibility_model(
    model: CompatibilityModel, path: str | Path, metadata: dict | None = None
) -> None:
    """Write the model as float32 binary plus a JSON sidecar at path + '.json'."""
    path = Path(path)
    variant_code = _VARIANTS.index(model.variant)
    if model.variant == "nonlinear":
        dims = (model.a.shape[0], model.a.shape[1], model.b.shape[1])
        blocks = (model.a, model.b)
    else:
        dims = (model.w.shape[0], 0, model.w.shape[1])
        blocks = (model.w,)
    parts = [struct.pack("<4sHBIII", _CKPT_MAGIC, _CKPT_VERSION, variant_code, *dims)]
    for block in blocks:
        parts.append(np.asarray(block, dtype="<f4").tobytes())
    path.write_bytes(b"".join(parts))
    sidecar = {"format": _CKPT_MAGIC.decode(), "version": _CKPT_VERSION,
               "variant": model.variant}
    if metadata:
        sidecar.update(metadata)
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_compatibility_model(path: str | Path) -> CompatibilityModel:
    blob = Path(path).read_bytes()
    header = struct.Struct("<4sHBIII")
    if len(blob) < header.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, variant_code, feature_dim, hidden_dim, class_dim = header.unpack_from(
        blob, 0
    )
    if magic != _CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _CKPT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if variant_code >= len(_VARIANTS):
        raise FormatError(f"{path}: unknown variant code {variant_code}")
    variant = _VARIANTS[variant_code]
    offset = header.size

    def take(shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        if arr.size != count:
            raise FormatError(f"{path}: truncated tensor data")
        return arr.astype(np.float64).reshape(shape)

    if variant == "nonlinear":
        a = take((feature_dim, hidden_dim))
        offset += 4 * a.size
        b = take((hidden_dim, class_dim))
        return CompatibilityModel(variant="nonlinear", a=a, b=b)
    w = take((feature_dim, class_dim))
    return CompatibilityModel(variant="bilinear", w=w)
