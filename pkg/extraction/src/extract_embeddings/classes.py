"""Class-embedding extraction: word-vector lookup averaged over label and synonyms."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from zerodiffusion import ClassEmbedding, write_class_embeddings

from .errors import DataError
from .manifest import CLASS_DIM, ExtractionManifest, load_synonyms
from .word_vectors import WordVectors, load_word_vectors, tokenize

log = logging.getLogger(__name__)


def class_embedding_for(
    label: str, synonyms: list[str], vectors: WordVectors
) -> tuple[np.ndarray | None, list[str]]:
    """Flat mean over the label's tokens and every synonym's tokens.

    Returns (vector, missing_tokens); the vector is None when not a single
    token resolved. Tokens that do resolve carry the class on their own, so
    one obscure synonym never poisons an otherwise fine label.
    """
    tokens = tokenize(label)
    for synonym in synonyms:
        tokens.extend(tokenize(synonym))
    found: list[np.ndarray] = []
    missing: list[str] = []
    for token in tokens:
        vec = vectors.vector(token)
        (found.append(vec) if vec is not None else missing.append(token))
    if not found:
        return None, missing
    return np.mean(np.stack(found), axis=0), missing


def extract_class_embeddings(
    manifest: ExtractionManifest, skip_oov: bool = False
) -> tuple[Path, dict]:
    """Write the class-embedding table plus a sidecar extraction report.

    Out-of-vocabulary tokens are always listed in the report. A class whose
    tokens all miss is a hard error unless skip_oov is set, in which case it
    is dropped from the output and recorded as skipped.
    """
    labels = manifest.class_labels()
    if not labels:
        raise DataError("manifest lists no classes and no audio to take labels from")
    vectors = load_word_vectors(manifest.word_embeddings)
    if vectors.dim != CLASS_DIM:
        raise DataError(
            f"word vectors are {vectors.dim}-dim; class embeddings must be "
            f"{CLASS_DIM}-dim"
        )
    synonyms = load_synonyms(manifest.synonyms)

    table: list[ClassEmbedding] = []
    oov: dict[str, list[str]] = {}
    skipped: list[str] = []
    for label in labels:
        syns = synonyms.get(label, [])
        vector, missing = class_embedding_for(label, syns, vectors)
        if missing:
            oov[label] = missing
        if vector is None:
            if not skip_oov:
                raise DataError(
                    f"class '{label}' has no in-vocabulary tokens {missing}; "
                    "fix the synonym file or pass skip_oov to drop the class"
                )
            log.warning("skipping class '%s': no in-vocabulary tokens %s",
                        label, missing)
            skipped.append(label)
            continue
        table.append(ClassEmbedding(label=label, synonyms=list(syns), vector=vector))

    if not table:
        raise DataError("every class was skipped; nothing to write")
    out = Path(manifest.class_output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_class_embeddings(table, out)
    report = {
        "dataset": manifest.dataset,
        "classes_written": [c.label for c in table],
        "skipped": skipped,
        "oov_tokens": oov,
        "vector_dim": CLASS_DIM,
    }
    report_path = Path(str(out) + ".report.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    return out, report
