import json
import logging
from pathlib import Path

import numpy as np
import pytest
from zerodiffusion import load_class_embeddings

from extract_embeddings import (
    DataError,
    class_embedding_for,
    extract_class_embeddings,
    load_manifest,
    load_word_vectors,
)

from helpers import make_manifest, make_word_model


@pytest.fixture
def vectors(tmp_path):
    make_word_model(tmp_path / "vectors.txt")
    return load_word_vectors(tmp_path / "vectors.txt")


def test_no_synonyms_is_the_raw_lookup(vectors):
    vec, missing = class_embedding_for("dog", [], vectors)
    assert missing == []
    assert np.array_equal(vec, vectors.vector("dog"))


def test_one_synonym_gives_two_point_mean(vectors):
    vec, missing = class_embedding_for("dog", ["hound"], vectors)
    assert missing == []
    expected = (vectors.vector("dog") + vectors.vector("hound")) / 2.0
    assert np.allclose(vec, expected, atol=1e-15)


def test_multi_token_label_averages_its_tokens(vectors):
    vec, _ = class_embedding_for("church_bells", [], vectors)
    expected = (vectors.vector("church") + vectors.vector("bells")) / 2.0
    assert np.allclose(vec, expected, atol=1e-15)


def test_one_oov_token_does_not_poison_the_class(vectors):
    vec, missing = class_embedding_for("rain", ["xyzzy drizzle"], vectors)
    assert missing == ["xyzzy"]
    expected = (vectors.vector("rain") + vectors.vector("drizzle")) / 2.0
    assert np.allclose(vec, expected, atol=1e-15)


def test_fully_oov_class_returns_none(vectors):
    vec, missing = class_embedding_for("xyzzy_qux", [], vectors)
    assert vec is None
    assert missing == ["xyzzy", "qux"]


def test_synonym_order_does_not_change_the_vector(vectors):
    forward, _ = class_embedding_for("dog", ["hound", "canine"], vectors)
    backward, _ = class_embedding_for("dog", ["canine", "hound"], vectors)
    assert np.max(np.abs(forward - backward)) < 1e-12


def _job(tmp_path, classes=("thunder",), synonyms=None):
    job = tmp_path / "job"
    job.mkdir(exist_ok=True)
    make_word_model(job / "vectors.txt")
    path = make_manifest(
        job,
        [
            {"path": "a.wav", "class": "dog"},
            {"path": "b.wav", "class": "rain"},
        ],
        classes=classes,
        synonyms=synonyms,
    )
    return load_manifest(path)


def test_extraction_output_loads_in_the_consumer(tmp_path):
    manifest = _job(tmp_path, synonyms={"dog": ["hound"]})
    out, report = extract_class_embeddings(manifest)
    table = load_class_embeddings(out)
    assert [c.label for c in table] == ["thunder", "dog", "rain"]
    for entry in table:
        assert entry.vector.shape == (300,)
    assert table[1].synonyms == ["hound"]
    assert report["classes_written"] == ["thunder", "dog", "rain"]
    assert report["vector_dim"] == 300


def test_written_vectors_match_the_word_model(tmp_path):
    manifest = _job(tmp_path, synonyms={"dog": ["hound"]})
    out, _ = extract_class_embeddings(manifest)
    vectors = load_word_vectors(manifest.word_embeddings)
    by_label = {c.label: c.vector for c in load_class_embeddings(out)}
    assert np.array_equal(by_label["rain"], vectors.vector("rain"))
    expected_dog = (vectors.vector("dog") + vectors.vector("hound")) / 2.0
    assert np.allclose(by_label["dog"], expected_dog, atol=1e-15)


def test_sidecar_report_lists_oov_tokens(tmp_path):
    manifest = _job(tmp_path, synonyms={"dog": ["xyzzy"]})
    out, report = extract_class_embeddings(manifest)
    assert report["oov_tokens"] == {"dog": ["xyzzy"]}
    sidecar = json.loads(Path(str(out) + ".report.json").read_text())
    assert sidecar["oov_tokens"] == {"dog": ["xyzzy"]}
    # The class itself still made it out, carried by its resolved token.
    assert "dog" in report["classes_written"]


def test_fully_oov_class_is_a_hard_error_by_default(tmp_path):
    manifest = _job(tmp_path, classes=("qux",))
    with pytest.raises(DataError, match="'qux'"):
        extract_class_embeddings(manifest)


def test_skip_oov_drops_the_class_and_records_it(tmp_path, caplog):
    manifest = _job(tmp_path, classes=("qux",))
    with caplog.at_level(logging.WARNING):
        out, report = extract_class_embeddings(manifest, skip_oov=True)
    assert report["skipped"] == ["qux"]
    assert [c.label for c in load_class_embeddings(out)] == ["dog", "rain"]
    assert any("qux" in message for message in caplog.messages)


def test_every_class_skipped_is_still_an_error(tmp_path):
    job = tmp_path / "job"
    job.mkdir()
    make_word_model(job / "vectors.txt")
    path = make_manifest(job, [], classes=["qux", "xyzzy"])
    with pytest.raises(DataError, match="every class"):
        extract_class_embeddings(load_manifest(path), skip_oov=True)


def test_wrong_dimension_word_model_rejected(tmp_path):
    job = tmp_path / "job"
    job.mkdir()
    make_word_model(job / "vectors.txt", dim=50)
    path = make_manifest(job, [], classes=["dog"])
    with pytest.raises(DataError, match="300"):
        extract_class_embeddings(load_manifest(path))


def test_manifest_without_any_labels_rejected(tmp_path):
    job = tmp_path / "job"
    job.mkdir()
    make_word_model(job / "vectors.txt")
    path = make_manifest(job, [])
    with pytest.raises(DataError, match="no classes"):
        extract_class_embeddings(load_manifest(path))
