"""Conditional denoising model over feature embeddings.

Training pairs a clean feature vector with its class embedding. The feature
side is corrupted with Gaussian noise whose amplitude grows with training
progress, the class side is jittered, and a small two-layer network learns to
reproduce the clean feature from the pair. At generation time the feature
slot is pure noise and the class slot is the (unjittered) embedding of an
unseen class, so the network emits synthetic features for classes it never
saw.

The loss drives five statistics of a generated batch toward the real batch:
elementwise reconstruction, kernel MMD between the two point clouds, a
one-sided per-dimension variance deficit, squared centroid distance, and
per-sample cosine misalignment.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .embeddings import ClassEmbedding, EmbeddingRecord, class_map
from .errors import DataError, DimensionError, FormatError, NumericalError
from .numerics import (
    AdamState,
    Rng,
    adam_step,
    affine_backward,
    affine_forward,
    clip_global_norm,
    dropout,
    gaussian_sample,
    init_affine,
    leaky_relu,
    tanh_act,
)

__all__ = [
    "NOISE_VARIANCE",
    "NOISE_STD",
    "LossWeights",
    "LossComponents",
    "NoiseSchedule",
    "DiffusionTrainConfig",
    "DiffusionModel",
    "EpochStats",
    "corrupt",
    "jitter_class",
    "denoise_forward",
    "loss_components",
    "total_loss",
    "train_diffusion",
    "generate_unseen",
    "save_diffusion_model",
    "load_diffusion_model",
]

# Corruption noise is drawn from N(0, 0.1); 0.1 is the variance.
NOISE_VARIANCE = 0.1
NOISE_STD = float(np.sqrt(NOISE_VARIANCE))

_CKPT_MAGIC = b"ZDDM"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class LossWeights:
    """Weights of the five loss components in the training objective."""

    reconstruction: float = 1.0
    mmd: float = 1.0
    variance: float = 0.1
    centroid: float = 0.2
    cosine: float = 2.0

    def __post_init__(self) -> None:
        for name in ("reconstruction", "mmd", "variance", "centroid", "cosine"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight '{name}' must be non-negative")


class LossComponents(NamedTuple):
    reconstruction: float
    mmd: float
    variance: float
    centroid: float
    cosine: float


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear noise ramp: corruption scale p runs from 0 to 1 across epochs."""

    total_epochs: int
    noise_std: float = NOISE_STD

    def __post_init__(self) -> None:
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be at least 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")

    def scale(self, epoch: int) -> float:
        """Noise scale for an epoch; a single-epoch schedule stays at 0."""
        if not 0 <= epoch < self.total_epochs:
            raise ValueError(
                f"epoch {epoch} outside schedule of {self.total_epochs} epochs"
            )
        if self.total_epochs == 1:
            return 0.0
        return epoch / (self.total_epochs - 1)


@dataclass(frozen=True)
class DiffusionTrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 50
    clip_max_norm: float = 1.0
    hidden_dim: int = 128
    dropout_rate: float = 0.3
    leaky_slope: float = 0.01
    weights: LossWeights = field(default_factory=LossWeights)
    gen_noise_std: float = NOISE_STD
    refine_steps: int = 0
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 2 or self.epochs < 1:
            raise ValueError("bad diffusion training hyperparameters")
        if self.clip_max_norm <= 0 or self.hidden_dim < 1:
            raise ValueError("bad diffusion training hyperparameters")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.gen_noise_std < 0 or self.refine_steps < 0 or self.weight_decay < 0:
            raise ValueError("bad diffusion training hyperparameters")


@dataclass
class DiffusionModel:
    """Two affine layers: concat(feature, class) -> hidden -> feature.

    LeakyReLU and dropout follow the first layer, tanh caps the second, so
    every generated component lies in [-1, 1].
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    dropout_rate: float = 0.3
    leaky_slope: float = 0.01

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.w2.shape[1]

    @property
    def class_dim(self) -> int:
        return self.w1.shape[0] - self.w2.shape[1]

    @classmethod
    def init(
        cls,
        feature_dim: int,
        class_dim: int,
        rng: np.random.Generator,
        hidden_dim: int = 128,
        dropout_rate: float = 0.3,
        leaky_slope: float = 0.01,
    ) -> "DiffusionModel":
        w1, b1 = init_affine(rng, feature_dim + class_dim, hidden_dim)
        w2, b2 = init_affine(rng, hidden_dim, feature_dim)
        return cls(
            w1=w1, b1=b1, w2=w2, b2=b2,
            dropout_rate=dropout_rate, leaky_slope=leaky_slope,
        )

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def corrupt(
    feature: np.ndarray,
    p: float,
    rng: np.random.Generator,
    noise_std: float = NOISE_STD,
) -> np.ndarray:
    """feature + p * noise, noise ~ N(0, noise_std**2) elementwise.

    p must lie in [0, 1]; at p = 0 the input comes back bit-exact.
    Accepts a single vector or a batch of rows.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise scale p must be in [0, 1], got {p}")
    feature = np.asarray(feature)
    noise = gaussian_sample(rng, feature.shape, 0.0, noise_std)
    return feature + p * noise


def jitter_class(
    class_vec: np.ndarray,
    rng: np.random.Generator,
    noise_std: float = NOISE_STD,
) -> np.ndarray:
    """class_vec + noise, noise ~ N(0, noise_std**2). Training-time only."""
    class_vec = np.asarray(class_vec)
    return class_vec + gaussian_sample(rng, class_vec.shape, 0.0, noise_std)


def _forward(
    model: DiffusionModel,
    noisy: np.ndarray,
    classes: np.ndarray,
    rng: np.random.Generator | None,
    training: bool,
) -> tuple[np.ndarray, dict]:
    noisy = np.asarray(noisy)
    classes = np.asarray(classes)
    if noisy.ndim != 2 or classes.ndim != 2 or noisy.shape[0] != classes.shape[0]:
        raise DimensionError(
            f"feature batch {noisy.shape} and class batch {classes.shape} disagree"
        )
    if noisy.shape[1] != model.feature_dim or classes.shape[1] != model.class_dim:
        raise DimensionError(
            f"model expects feature dim {model.feature_dim} and class dim "
            f"{model.class_dim}, got {noisy.shape[1]} and {classes.shape[1]}"
        )
    if training and model.dropout_rate > 0 and rng is None:
        raise ValueError("training-mode forward with dropout needs an rng")
    x = np.concatenate([noisy, classes], axis=1)
    pre1 = affine_forward(x, model.w1, model.b1)
    act1, act1_deriv = leaky_relu(pre1, model.leaky_slope)
    if training:
        dropped, mask = dropout(act1, model.dropout_rate, rng, training=True)
        keep_scale = mask / (1.0 - model.dropout_rate) if model.dropout_rate > 0 else mask
    else:
        dropped = act1
        keep_scale = np.ones_like(act1)
    pre2 = affine_forward(dropped, model.w2, model.b2)
    out, out_deriv = tanh_act(pre2)
    cache = {
        "x": x,
        "act1_deriv": act1_deriv,
        "keep_scale": keep_scale,
        "dropped": dropped,
        "out_deriv": out_deriv,
    }
    return out, cache


def denoise_forward(
    model: DiffusionModel,
    noisy: np.ndarray,
    classes: np.ndarray,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> np.ndarray:
    """Denoised feature batch for (noisy feature, class embedding) rows."""
    out, _ = _forward(model, noisy, classes, rng, training)
    return out


def _backward(
    model: DiffusionModel, cache: dict, grad_out: np.ndarray
) -> dict[str, np.ndarray]:
    grad_pre2 = grad_out * cache["out_deriv"]
    grad_dropped, grad_w2, grad_b2 = affine_backward(cache["dropped"], model.w2, grad_pre2)
    grad_act1 = grad_dropped * cache["keep_scale"]
    grad_pre1 = grad_act1 * cache["act1_deriv"]
    _, grad_w1, grad_b1 = affine_backward(cache["x"], model.w1, grad_pre1)
    return {"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2}


def _median_bandwidth(generated: np.ndarray, real: np.ndarray) -> float:
    # Median pairwise distance over the joint batch, floored at 1e-6.
    joint = np.concatenate([generated, real], axis=0)
    sq = np.sum(joint * joint, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (joint @ joint.T)
    np.maximum(d2, 0.0, out=d2)
    n = joint.shape[0]
    iu = np.triu_indices(n, k=1)
    med = float(np.median(np.sqrt(d2[iu])))
    return max(med, 1e-6)


def _mmd_and_grad(
    generated: np.ndarray, real: np.ndarray, bandwidth: float | None
) -> tuple[float, np.ndarray, float]:
    """Biased (V-statistic) squared MMD with an RBF kernel, plus d/d generated.

    The bandwidth defaults to the median heuristic over the joint batch and
    is treated as a constant under differentiation.
    """
    h = _median_bandwidth(generated, real) if bandwidth is None else float(bandwidth)
    inv = 1.0 / (2.0 * h * h)

    def kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        sq_a = np.sum(a * a, axis=1)
        sq_b = np.sum(b * b, axis=1)
        d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (a @ b.T)
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-d2 * inv)

    k_gg = kernel(generated, generated)
    k_rr = kernel(real, real)
    k_gr = kernel(generated, real)
    n_g = generated.shape[0]
    n_r = real.shape[0]
    value = float(k_gg.mean() + k_rr.mean() - 2.0 * k_gr.mean())

    # d k(a, b) / d a = k(a, b) * (b - a) / h^2; only generated rows move.
    inv_h2 = 1.0 / (h * h)
    row_gg = k_gg.sum(axis=1)
    row_gr = k_gr.sum(axis=1)
    grad = (2.0 / (n_g * n_g)) * (k_gg @ generated - row_gg[:, None] * generated)
    grad -= (2.0 / (n_g * n_r)) * (k_gr @ real - row_gr[:, None] * generated)
    grad *= inv_h2
    return value, grad, h


def _loss_and_grad(
    generated: np.ndarray,
    real: np.ndarray,
    weights: LossWeights,
    bandwidth: float | None = None,
) -> tuple[LossComponents, float, np.ndarray]:
    generated = np.asarray(generated, dtype=np.float64)
    real = np.asarray(real, dtype=np.float64)
    if generated.shape != real.shape:
        raise DimensionError(
            f"generated batch {generated.shape} and real batch {real.shape} disagree"
        )
    if generated.ndim != 2 or generated.shape[0] < 2:
        raise DimensionError("loss needs matching 2-D batches with at least 2 rows")
    n, dim = generated.shape

    diff = generated - real
    recon = float(np.mean(diff * diff))
    grad_recon = 2.0 * diff / diff.size

    mmd, grad_mmd, _ = _mmd_and_grad(generated, real, bandwidth)

    mean_g = generated.mean(axis=0)
    mean_r = real.mean(axis=0)
    var_g = generated.var(axis=0)
    var_r = real.var(axis=0)
    deficit = var_r - var_g
    active = deficit > 0
    variance = float(np.where(active, deficit, 0.0).mean())
    grad_var = np.where(active, -(2.0 / n) * (generated - mean_g), 0.0) / dim

    delta = mean_g - mean_r
    centroid = float(np.mean(delta * delta))
    grad_cent = np.broadcast_to(2.0 * delta / (n * dim), generated.shape).copy()

    norm_g = np.linalg.norm(generated, axis=1)
    norm_r = np.linalg.norm(real, axis=1)
    ok = (norm_g > 0) & (norm_r > 0)
    dots = np.sum(generated * real, axis=1)
    cos = np.zeros(n)
    safe_prod = np.where(ok, norm_g * norm_r, 1.0)
    cos[ok] = dots[ok] / safe_prod[ok]
    # A zero-norm vector on either side contributes nothing to the loss.
    cosine = float(np.where(ok, 1.0 - cos, 0.0).mean())
    grad_cos = np.zeros_like(generated)
    if ok.any():
        g_ok = generated[ok]
        r_ok = real[ok]
        ng = norm_g[ok][:, None]
        nr = norm_r[ok][:, None]
        d = dots[ok][:, None]
        dcos = r_ok / (ng * nr) - d * g_ok / (ng**3 * nr)
        grad_cos[ok] = -dcos / n

    components = LossComponents(recon, mmd, variance, centroid, cosine)
    total = total_loss(components, weights)
    grad = (
        weights.reconstruction * grad_recon
        + weights.mmd * grad_mmd
        + weights.variance * grad_var
        + weights.centroid * grad_cent
        + weights.cosine * grad_cos
    )
    return components, total, grad


def loss_components(
    generated: np.ndarray,
    real: np.ndarray,
    bandwidth: float | None = None,
) -> LossComponents:
    """The five unweighted loss components for a generated/real batch pair."""
    components, _, _ = _loss_and_grad(generated, real, LossWeights(), bandwidth)
    return components


def total_loss(components: LossComponents, weights: LossWeights) -> float:
    """Weighted sum of the five components."""
    return (
        weights.reconstruction * components.reconstruction
        + weights.mmd * components.mmd
        + weights.variance * components.variance
        + weights.centroid * components.centroid
        + weights.cosine * components.cosine
    )


@dataclass(frozen=True)
class EpochStats:
    """Per-epoch mean loss components, noise scale included for the record."""

    epoch: int
    noise_scale: float
    reconstruction: float
    mmd: float
    variance: float
    centroid: float
    cosine: float
    total: float


def _class_matrix(
    records: Sequence[EmbeddingRecord],
    classes: Mapping[str, np.ndarray],
) -> np.ndarray:
    rows = []
    for r in records:
        if r.class_label not in classes:
            raise DataError(f"no class embedding for class '{r.class_label}'")
        rows.append(np.asarray(classes[r.class_label], dtype=np.float64))
    return np.stack(rows)


def train_diffusion(
    records: Sequence[EmbeddingRecord],
    classes: Sequence[ClassEmbedding] | Mapping[str, np.ndarray],
    config: DiffusionTrainConfig,
    rng: Rng | None = None,
) -> tuple[DiffusionModel, list[EpochStats]]:
    """Train the denoiser on seen-class records; returns (model, loss trace).

    The noise scale p ramps linearly from 0 in the first epoch to 1 in the
    last. Batches with fewer than 2 rows are skipped because the batch losses
    are undefined there.
    """
    if not records:
        raise DataError("cannot train the diffusion model on an empty feature table")
    if rng is None:
        rng = Rng(config.seed if config.seed is not None else 0)
    lookup = classes if isinstance(classes, Mapping) else class_map(classes)
    feats = np.stack([np.asarray(r.vector, dtype=np.float64) for r in records])
    class_rows = _class_matrix(records, lookup)

    model = DiffusionModel.init(
        feature_dim=feats.shape[1],
        class_dim=class_rows.shape[1],
        rng=rng.stream("diffusion", "init"),
        hidden_dim=config.hidden_dim,
        dropout_rate=config.dropout_rate,
        leaky_slope=config.leaky_slope,
    )
    state = AdamState.for_params(
        model.params(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    schedule = NoiseSchedule(total_epochs=config.epochs)
    shuffle_rng = rng.stream("diffusion", "shuffle")
    noise_rng = rng.stream("diffusion", "noise")
    jitter_rng = rng.stream("diffusion", "jitter")
    dropout_rng = rng.stream("diffusion", "dropout")

    n = feats.shape[0]
    trace: list[EpochStats] = []
    for epoch in range(config.epochs):
        p = schedule.scale(epoch)
        order = shuffle_rng.permutation(n)
        sums = np.zeros(6)
        counted = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if idx.size < 2:
                continue
            clean = feats[idx]
            noisy = corrupt(clean, p, noise_rng, schedule.noise_std)
            jittered = jitter_class(class_rows[idx], jitter_rng, schedule.noise_std)
            out, cache = _forward(model, noisy, jittered, dropout_rng, training=True)
            components, total, grad_out = _loss_and_grad(out, clean, config.weights)
            if not np.isfinite(total):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch starting at {start}"
                )
            grads = _backward(model, cache, grad_out)
            grads, _ = clip_global_norm(grads, config.clip_max_norm)
            adam_step(model.params(), grads, state)
            sums += np.array([*components, total]) * idx.size
            counted += idx.size
        if counted == 0:
            raise DataError("every batch was smaller than 2 records; nothing trained")
        means = sums / counted
        trace.append(
            EpochStats(
                epoch=epoch,
                noise_scale=p,
                reconstruction=means[0],
                mmd=means[1],
                variance=means[2],
                centroid=means[3],
                cosine=means[4],
                total=means[5],
            )
        )
    return model, trace


def generate_unseen(
    model: DiffusionModel,
    unseen_classes: Sequence[ClassEmbedding],
    count_per_class: int,
    rng: np.random.Generator,
    noise_std: float = NOISE_STD,
    refine_steps: int = 0,
) -> list[EmbeddingRecord]:
    """Synthesize count_per_class feature records for every unseen class.

    The feature slot starts as pure Gaussian noise and the class slot is the
    clean class embedding. One forward pass produces the sample; optional
    refinement re-corrupts and re-denoises at decreasing noise scales.
    """
    if count_per_class < 1:
        raise ValueError(f"count_per_class must be positive, got {count_per_class}")
    if refine_steps < 0:
        raise ValueError(f"refine_steps must be non-negative, got {refine_steps}")
    out: list[EmbeddingRecord] = []
    for cls in unseen_classes:
        vec = np.asarray(cls.vector, dtype=np.float64)
        if vec.shape[0] != model.class_dim:
            raise DimensionError(
                f"class '{cls.label}' has dimension {vec.shape[0]}, "
                f"model expects {model.class_dim}"
            )
        cond = np.broadcast_to(vec, (count_per_class, model.class_dim))
        noise = gaussian_sample(
            rng, (count_per_class, model.feature_dim), 0.0, noise_std
        )
        sample = denoise_forward(model, noise, cond, training=False)
        for step in range(refine_steps):
            p = (refine_steps - step) / (refine_steps + 1)
            sample = denoise_forward(
                model, corrupt(sample, p, rng, noise_std), cond, training=False
            )
        for j in range(count_per_class):
            out.append(
                EmbeddingRecord(
                    id=f"synth_{cls.label}_{j:05d}",
                    class_label=cls.label,
                    vector=sample[j].copy(),
                )
            )
    return out


def save_diffusion_model(
    model: DiffusionModel, path: str | Path, metadata: dict | None = None
) -> None:
    """Write the model as float32 binary plus a JSON sidecar at path + '.json'."""
    path = Path(path)
    parts = [
        struct.pack(
            "<4sHIIIdd",
            _CKPT_MAGIC,
            _CKPT_VERSION,
            model.feature_dim,
            model.class_dim,
            model.hidden_dim,
            model.dropout_rate,
            model.leaky_slope,
        )
    ]
    for block in (model.w1, model.b1, model.w2, model.b2):
        parts.append(np.asarray(block, dtype="<f4").tobytes())
    path.write_bytes(b"".join(parts))
    sidecar = {"format": _CKPT_MAGIC.decode(), "version": _CKPT_VERSION}
    if metadata:
        sidecar.update(metadata)
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_diffusion_model(path: str | Path) -> DiffusionModel:
    blob = Path(path).read_bytes()
    header = struct.Struct("<4sHIIIdd")
    if len(blob) < header.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, feature_dim, class_dim, hidden_dim, rate, slope = header.unpack_from(
        blob, 0
    )
    if magic != _CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _CKPT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = header.size
    shapes = [
        (feature_dim + class_dim, hidden_dim),
        (hidden_dim,),
        (hidden_dim, feature_dim),
        (feature_dim,),
    ]
    blocks = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        if arr.size != count:
            raise FormatError(f"{path}: truncated tensor data")
        offset += 4 * count
        blocks.append(arr.astype(np.float64).reshape(shape))
    return DiffusionModel(
        w1=blocks[0], b1=blocks[1], w2=blocks[2], b2=blocks[3],
        dropout_rate=rate, leaky_slope=slope,
    )
