"""Acceptance gate for the extraction layer: the cross-package round trip.

Runs both command-line extraction scripts against a complete miniature job,
then checks the emitted files through the consumer package's own loaders.
One criterion, one printed verdict line.
"""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
from zerodiffusion import load_class_embeddings, load_feature_table

import conftest
from helpers import make_wav, make_word_model

PLUGIN = Path(__file__).parent / "plugins" / "toy_embedder.py"


def _verdict(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}"
    print(line)
    conftest.acceptance_verdicts.append(line)
    return ok


def _script(name: str, subcommand: str) -> list[str]:
    found = shutil.which(name)
    if found:
        return [found]
    return [sys.executable, "-m", "extract_embeddings.cli", subcommand]


def _build_job(root: Path, synonyms: dict) -> Path:
    root.mkdir(parents=True)
    make_word_model(root / "vectors.txt")
    make_wav(root / "dog1.wav", freq=440.0)
    make_wav(root / "dog2.wav", freq=660.0)
    make_wav(root / "rain1.wav", freq=990.0)
    (root / "synonyms.json").write_text(json.dumps(synonyms))
    manifest = {
        "dataset": "roundtrip",
        "word_embeddings": "vectors.txt",
        "class_output": "out/classes.jsonl",
        "feature_output": "out/features.jsonl",
        "synonyms": "synonyms.json",
        "classes": ["thunder"],
        "audio": [
            {"path": "dog1.wav", "class": "dog"},
            {"path": "dog2.wav", "class": "dog"},
            {"path": "rain1.wav", "class": "rain"},
        ],
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def test_acceptance_extraction_round_trip(tmp_path):
    synonyms = {"dog": ["hound", "canine"], "thunder": ["siren", "drizzle"]}
    manifest = _build_job(tmp_path / "fwd", synonyms)

    classes_cmd = _script("extract-class-embeddings", "classes")
    features_cmd = _script("extract-feature-embeddings", "features")
    ran_classes = subprocess.run(
        classes_cmd + ["--manifest", str(manifest)],
        capture_output=True, text=True,
    )
    ran_features = subprocess.run(
        features_cmd + ["--manifest", str(manifest),
                        "--embedder", f"{PLUGIN}:embed"],
        capture_output=True, text=True,
    )
    scripts_ok = ran_classes.returncode == 0 and ran_features.returncode == 0

    # Consumer-side validation: the loaders either accept the files or raise.
    class_table = load_class_embeddings(tmp_path / "fwd" / "out" / "classes.jsonl")
    feature_table = load_feature_table(tmp_path / "fwd" / "out" / "features.jsonl")
    labels = [c.label for c in class_table]
    loaders_ok = (
        labels == ["thunder", "dog", "rain"]
        and [r.id for r in feature_table] == ["dog1", "dog2", "rain1"]
        and all(r.vector.shape == (128,) for r in feature_table)
    )
    dims_ok = all(c.vector.shape == (300,) for c in class_table)

    # Same job with every synonym list reversed must yield the same vectors.
    permuted = {label: list(reversed(syns)) for label, syns in synonyms.items()}
    manifest_rev = _build_job(tmp_path / "rev", permuted)
    ran_rev = subprocess.run(
        classes_cmd + ["--manifest", str(manifest_rev)],
        capture_output=True, text=True,
    )
    rev_table = load_class_embeddings(tmp_path / "rev" / "out" / "classes.jsonl")
    drift = max(
        float(np.max(np.abs(fwd.vector - rev.vector)))
        for fwd, rev in zip(class_table, rev_table)
    )
    permutation_ok = ran_rev.returncode == 0 and drift < 1e-12

    assert _verdict(
        "extraction round-trip",
        scripts_ok and loaders_ok and dims_ok and permutation_ok,
        f"scripts rc=({ran_classes.returncode},{ran_features.returncode}), "
        f"{len(class_table)} classes at 300-dim, {len(feature_table)} clips "
        f"at 128-dim through consumer loaders, synonym-permutation drift "
        f"{drift:.2e} (< 1e-12)",
    )
