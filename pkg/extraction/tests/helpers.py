"""Fixture builders: tiny word-vector models, PCM WAV clips, manifests."""

from __future__ import annotations

import json
import wave
from pathlib import Path

import numpy as np

from extract_embeddings import write_word_vectors_binary, write_word_vectors_text

BASE_VOCAB = [
    "dog", "hound", "canine", "rain", "drizzle", "church", "bells",
    "thunder", "siren", "Dog",
]


def make_word_model(path: Path, words=None, dim: int = 300, fmt: str = "text",
                    seed: int = 0) -> tuple[list[str], np.ndarray]:
    words = list(BASE_VOCAB if words is None else words)
    matrix = np.random.default_rng(seed).normal(size=(len(words), dim)).astype(np.float32)
    writer = write_word_vectors_binary if fmt == "binary" else write_word_vectors_text
    writer(words, matrix, path)
    return words, matrix


def make_wav(path: Path, seconds: float = 0.25, rate: int = 16000,
             freq: float = 440.0, width: int = 2, stereo_inverted: bool = False,
             amplitude: float = 0.5) -> None:
    t = np.arange(int(seconds * rate)) / rate
    x = amplitude * np.sin(2.0 * np.pi * freq * t)
    channels = np.stack([x, -x], axis=1).ravel() if stereo_inverted else x
    if width == 1:
        data = np.clip(channels * 127 + 128, 0, 255).astype(np.uint8)
    elif width == 2:
        data = np.clip(channels * 32767, -32768, 32767).astype("<i2")
    elif width == 4:
        data = np.clip(channels * 2147483647, -2147483648, 2147483647).astype("<i4")
    else:
        raise ValueError(f"unsupported test width {width}")
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(2 if stereo_inverted else 1)
        handle.setsampwidth(width)
        handle.setframerate(rate)
        handle.writeframes(data.tobytes())


def make_manifest(directory: Path, audio_entries, classes=(), synonyms=None,
                  word_model: str = "vectors.txt", name: str = "manifest.json") -> Path:
    obj = {
        "dataset": "testset",
        "word_embeddings": word_model,
        "class_output": "out/classes.jsonl",
        "feature_output": "out/features.jsonl",
        "audio": list(audio_entries),
        "classes": list(classes),
    }
    if synonyms is not None:
        (directory / "synonyms.json").write_text(json.dumps(synonyms))
        obj["synonyms"] = "synonyms.json"
    path = directory / name
    path.write_text(json.dumps(obj, indent=2))
    return path
