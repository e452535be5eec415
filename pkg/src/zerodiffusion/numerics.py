"""Dense numeric kernels for the embedding models.

Matrices are plain 2-D numpy arrays, row-major, one sample per row; vectors
are 1-D arrays. Everything defaults to float64, and float32 inputs are
propagated unchanged for speed-sensitive runs. Parameter collections and
their gradients are dicts mapping block names to arrays of matching shape.

Scope is deliberately narrow: the affine/activation/dropout kernels used by
the models in this package, Adam with decoupled weight decay, global-norm
clipping, seeded sampling, and a central-difference gradient checker. There
is no general autodiff and no sparse or GPU path.
"""

from __future__ import annotations

import hashlib
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericalError

__all__ = [
    "Rng",
    "AdamState",
    "affine_forward",
    "affine_backward",
    "leaky_relu",
    "tanh_act",
    "dropout",
    "adam_step",
    "clip_global_norm",
    "global_norm",
    "finite_diff_check",
    "gaussian_sample",
    "init_affine",
]

_U64 = (1 << 64) - 1


def _purpose_key(purpose: str | int) -> int:
    if isinstance(purpose, int):
        return purpose & _U64
    digest = hashlib.blake2s(purpose.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Rng:
    """Deterministic factory of independent random streams.

    Consumers ask for a stream by purpose, e.g. ``rng.stream("dropout")`` or
    ``rng.stream("generate", 3)``. A stream is seeded by the root seed plus a
    stable hash of its purpose, so the same (seed, purpose) pair always yields
    the same sequence and adding a new consumer never perturbs existing ones.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _U64

    def stream(self, *purpose: str | int) -> np.random.Generator:
        key = tuple(_purpose_key(p) for p in purpose)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=key)
        return np.random.default_rng(seq)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"


def _as_matrix(name: str, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def affine_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x (n, din) @ w (din, dout) + b (dout,) -> (n, dout)."""
    x = _as_matrix("input", x)
    w = _as_matrix("weight", w)
    b = np.asarray(b)
    if b.ndim != 1:
        raise DimensionError(f"bias must be 1-D, got shape {b.shape}")
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise DimensionError(
            f"affine shapes disagree: input {x.shape}, weight {w.shape}, bias {b.shape}"
        )
    return x @ w + b


def affine_backward(
    x: np.ndarray, w: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of an affine layer: returns (grad_input, grad_weight, grad_bias).

    upstream (n, dout) is dLoss/dOutput. grad_weight = x.T @ upstream,
    grad_bias = column sums of upstream, grad_input = upstream @ w.T.
    """
    x = _as_matrix("input", x)
    w = _as_matrix("weight", w)
    upstream = _as_matrix("upstream", upstream)
    if upstream.shape != (x.shape[0], w.shape[1]) or x.shape[1] != w.shape[0]:
        raise DimensionError(
            f"affine_backward shapes disagree: input {x.shape}, weight {w.shape}, "
            f"upstream {upstream.shape}"
        )
    grad_w = x.T @ upstream
    grad_b = upstream.sum(axis=0)
    grad_x = upstream @ w.T
    return grad_x, grad_w, grad_b


def leaky_relu(x: np.ndarray, slope: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise max(x, slope * x); returns (value, derivative).

    The derivative at exactly 0 uses the negative-branch slope.
    """
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky slope must be in (0, 1), got {slope}")
    x = np.asarray(x)
    positive = x > 0
    out = np.where(positive, x, slope * x)
    deriv = np.where(positive, np.asarray(1.0, dtype=x.dtype), np.asarray(slope, dtype=x.dtype))
    return out, deriv


def tanh_act(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise tanh; returns (value, derivative) with derivative 1 - value**2."""
    out = np.tanh(np.asarray(x))
    return out, 1.0 - out * out


def dropout(
    x: np.ndarray, rate: float, rng: np.random.Generator, training: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout; returns (output, keep mask of 0/1 floats).

    Survivors are scaled by 1/(1 - rate) at training time so the expected
    value is unchanged; at inference the input passes through untouched.
    """
    x = np.asarray(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x.copy(), np.ones_like(x)
    mask = (rng.random(x.shape) >= rate).astype(x.dtype)
    return x * mask / (1.0 - rate), mask


@dataclass
class AdamState:
    """First/second moment accumulators plus hyperparameters for one model."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(
        cls,
        params: Mapping[str, np.ndarray],
        lr: float,
        weight_decay: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)
        state.m = {name: np.zeros_like(p) for name, p in params.items()}
        state.v = {name: np.zeros_like(p) for name, p in params.items()}
        return state


def adam_step(
    params: dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update with bias correction, in place.

    Decoupled weight decay shrinks parameters by lr * weight_decay before the
    Adam delta is applied. Arrays in ``params`` are mutated and returned.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        if name not in grads:
            raise KeyError(f"missing gradient for parameter block '{name}'")
        g = np.asarray(grads[name])
        if g.shape != p.shape:
            raise DimensionError(
                f"gradient shape {g.shape} does not match parameter '{name}' {p.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"gradient for parameter block '{name}' is not finite")
        if state.weight_decay != 0.0:
            p *= 1.0 - state.lr * state.weight_decay
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        g = np.asarray(g, dtype=np.float64)
        total += float((g * g).sum())
    return float(np.sqrt(total))


def clip_global_norm(
    grads: dict[str, np.ndarray], max_norm: float
) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns (grads, pre-clip norm). Scaling is in place and preserves
    direction; an all-zero gradient is returned untouched.
    """
    if max_norm <= 0.0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return grads, norm


def finite_diff_check(
    loss_fn: Callable[[dict[str, np.ndarray]], tuple[float, Mapping[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between analytic gradients and central differences.

    loss_fn(params) -> (loss, grads) must be deterministic; it is re-evaluated
    at perturbed parameter values, so any internal randomness has to be
    re-seeded per call. Relative error per entry is
    |analytic - cd| / max(|analytic|, |cd|, 1e-8). Parameters are perturbed in
    place and restored. 64-bit parameters are expected.
    """
    base_loss, analytic = loss_fn(params)
    check_loss, _ = loss_fn(params)
    if base_loss != check_loss:
        raise NumericalError(
            "loss_fn is not deterministic under repeated evaluation; "
            "finite differences would be meaningless"
        )
    worst = 0.0
    for name, p in params.items():
        grad = np.asarray(analytic[name])
        if grad.shape != p.shape:
            raise DimensionError(
                f"analytic gradient shape {grad.shape} does not match '{name}' {p.shape}"
            )
        flat_grad = grad.reshape(-1)
        for i in range(p.size):
            orig = p.flat[i]
            p.flat[i] = orig + epsilon
            hi, _ = loss_fn(params)
            p.flat[i] = orig - epsilon
            lo, _ = loss_fn(params)
            p.flat[i] = orig
            cd = (hi - lo) / (2.0 * epsilon)
            a = float(flat_grad[i])
            err = abs(a - cd) / max(abs(a), abs(cd), 1e-8)
            if err > worst:
                worst = err
    return worst


def gaussian_sample(
    rng: np.random.Generator,
    shape: tuple[int, ...] | int,
    mean: float = 0.0,
    std: float = 1.0,
) -> np.ndarray:
    """Gaussian draws with the given mean and standard deviation."""
    if std < 0.0:
        raise ValueError(f"std must be non-negative, got {std}")
    return rng.normal(loc=mean, scale=std, size=shape)


def init_affine(
    rng: np.random.Generator, fan_in: int, fan_out: int, dtype: type = np.float64
) -> tuple[np.ndarray, np.ndarray]:
    """Weight and bias drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be positive, got {fan_in}, {fan_out}")
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
    b = rng.uniform(-bound, bound, size=fan_out).astype(dtype)
    return w, b
