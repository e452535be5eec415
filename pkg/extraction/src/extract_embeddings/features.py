"""Feature-embedding extraction through a user-supplied trained embedder.

The embedder is the trained artifact this package deliberately does not
build: a callable taking (waveform, sample_rate) and returning the clip's
128-dim embedding. Train it on seen classes only; keeping unseen classes out
of its training data is what makes the downstream evaluation zero-shot, and
that discipline is the caller's responsibility.
"""

from __future__ import annotations

import importlib
import importlib.util
import json
import logging
from pathlib import Path
from typing import Callable

import numpy as np
from zerodiffusion import EmbeddingRecord, write_feature_table

from .audio import decode_wav
from .errors import AudioDecodeError, ConfigError, DataError
from .manifest import FEATURE_DIM, ExtractionManifest

log = logging.getLogger(__name__)

Embedder = Callable[[np.ndarray, int], np.ndarray]


def load_embedder(spec: str) -> Embedder:
    """Resolve 'module:attr' or 'path/to/plugin.py:attr' to the callable."""
    if ":" not in spec:
        raise ConfigError(
            f"embedder spec '{spec}' must look like 'module:callable' or "
            "'plugin.py:callable'"
        )
    where, attr = spec.rsplit(":", 1)
    if where.endswith(".py"):
        path = Path(where)
        if not path.is_file():
            raise ConfigError(f"embedder plugin file not found: {path}")
        module_spec = importlib.util.spec_from_file_location(path.stem, path)
        module = importlib.util.module_from_spec(module_spec)
        module_spec.loader.exec_module(module)
    else:
        try:
            module = importlib.import_module(where)
        except ImportError as exc:
            raise ConfigError(f"cannot import embedder module '{where}': {exc}") from exc
    fn = getattr(module, attr, None)
    if not callable(fn):
        raise ConfigError(f"embedder '{spec}' does not name a callable")
    return fn


def extract_feature_embeddings(
    manifest: ExtractionManifest, embedder: Embedder
) -> tuple[Path, dict]:
    """Write the feature table plus a sidecar report, in manifest order.

    Undecodable clips are skipped and logged; a wrong-shaped embedder output
    is a hard error because it means the plugin, not the data, is broken.
    """
    if not manifest.audio:
        raise DataError("manifest lists no audio entries")
    records: list[EmbeddingRecord] = []
    skipped: list[dict] = []
    for entry in manifest.audio:
        try:
            waveform, rate = decode_wav(entry.path)
        except AudioDecodeError as exc:
            log.warning("skipping clip %s: %s", entry.id, exc)
            skipped.append({"id": entry.id, "path": entry.path, "reason": str(exc)})
            continue
        vector = np.asarray(embedder(waveform, rate), dtype=np.float64)
        if vector.shape != (FEATURE_DIM,):
            raise DataError(
                f"embedder returned shape {vector.shape} for clip '{entry.id}'; "
                f"feature embeddings must be ({FEATURE_DIM},)"
            )
        if not np.all(np.isfinite(vector)):
            raise DataError(f"embedder returned non-finite values for clip '{entry.id}'")
        records.append(EmbeddingRecord(id=entry.id, class_label=entry.class_label,
                                       vector=vector))
    if not records:
        raise DataError("every clip was skipped; nothing to write")
    out = Path(manifest.feature_output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_table(records, out)
    report = {
        "dataset": manifest.dataset,
        "clips_written": len(records),
        "skipped": skipped,
        "vector_dim": FEATURE_DIM,
    }
    report_path = Path(str(out) + ".report.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    return out, report
