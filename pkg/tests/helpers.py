"""Shared test plumbing: tiny-scale configs and an independent benchmark oracle."""

from __future__ import annotations

import numpy as np

from zerodiffusion import ClassifierTrainConfig, DiffusionTrainConfig, Rng, SynthConfig
from zerodiffusion.embeddings import _synth_benchmark_full


def tiny_synth_config(**overrides) -> SynthConfig:
    base = dict(
        seen_classes=4,
        unseen_classes=2,
        samples_per_class=12,
        feature_dim=16,
        class_dim=6,
        feature_noise=0.05,
        coupling_noise=0.01,
    )
    base.update(overrides)
    return SynthConfig(**base)


def tiny_diffusion_config(**overrides) -> DiffusionTrainConfig:
    base = dict(batch_size=8, epochs=4, hidden_dim=32)
    base.update(overrides)
    return DiffusionTrainConfig(**base)


def tiny_classifier_config(**overrides) -> ClassifierTrainConfig:
    base = dict(learning_rate=1e-3, batch_size=8, epochs=4, hidden_dim=24)
    base.update(overrides)
    return ClassifierTrainConfig(**base)


def oracle_accuracy(config: SynthConfig, seed: int) -> float:
    """Nearest-centroid accuracy on unseen records, decoded through the
    benchmark's own coupling map.

    Class vectors are coupling.T @ centroid (plus coupling noise), so the
    pseudo-inverse of coupling.T maps them back to feature-space prototypes.
    Uses only the generator's ground truth, none of the learned models, and
    the same seed stream the experiment harness resolves data with.
    """
    records, classes, spec, coupling = _synth_benchmark_full(
        config, Rng(seed).stream("benchmark")
    )
    decode = np.linalg.pinv(coupling.T)
    lookup = {c.label: c.vector for c in classes}
    unseen = list(spec.unseen_classes)
    prototypes = np.stack([decode @ lookup[label] for label in unseen])
    hits = 0
    total = 0
    for record in records:
        if record.class_label not in spec.unseen_classes:
            continue
        distances = np.linalg.norm(prototypes - record.vector, axis=1)
        hits += unseen[int(np.argmin(distances))] == record.class_label
        total += 1
    return hits / total
