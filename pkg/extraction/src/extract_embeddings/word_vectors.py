"""Loaders for pretrained word-vector files in the two classic layouts.

Text: an ASCII header line "vocab_size dim", then one "word v1 ... vd" line
per entry. Binary: the same ASCII header, then for each entry the word bytes
terminated by a space, followed by dim raw little-endian float32 values
(an optional trailing newline per entry is tolerated).
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import DataError

_TOKEN_SPLIT = re.compile(r"[\s_\-]+")


def tokenize(label: str) -> list[str]:
    """Split a class label like 'church_bells' into lookup tokens."""
    return [t for t in _TOKEN_SPLIT.split(label.strip()) if t]


class WordVectors:
    """In-memory vocabulary with exact-then-lowercase lookup."""

    def __init__(self, words: list[str], matrix: np.ndarray):
        if matrix.ndim != 2 or len(words) != matrix.shape[0]:
            raise DataError("word list and vector matrix disagree")
        self._matrix = matrix
        self._index: dict[str, int] = {}
        self._lower: dict[str, int] = {}
        for i, word in enumerate(words):
            self._index.setdefault(word, i)
            self._lower.setdefault(word.lower(), i)

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    def __len__(self) -> int:
        return self._matrix.shape[0]

    def __contains__(self, token: str) -> bool:
        return token in self._index or token.lower() in self._lower

    def vector(self, token: str) -> np.ndarray | None:
        """Float64 copy of the token's vector, or None if out of vocabulary."""
        i = self._index.get(token)
        if i is None:
            i = self._lower.get(token.lower())
        if i is None:
            return None
        return self._matrix[i].astype(np.float64)


def _parse_header(line: bytes, path: Path) -> tuple[int, int]:
    try:
        vocab_size, dim = map(int, line.decode("utf-8").split())
    except (UnicodeDecodeError, ValueError) as exc:
        raise DataError(
            f"{path}: expected a 'vocab_size dim' header line"
        ) from exc
    if vocab_size < 1 or dim < 1:
        raise DataError(f"{path}: header {vocab_size} x {dim} is not positive")
    return vocab_size, dim


def _load_text(path: Path) -> WordVectors:
    words: list[str] = []
    rows: list[np.ndarray] = []
    with path.open("rb") as handle:
        vocab_size, dim = _parse_header(handle.readline(), path)
        for lineno, raw in enumerate(handle, start=2):
            parts = raw.decode("utf-8").rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise DataError(
                    f"{path}:{lineno}: expected a word and {dim} values, "
                    f"got {len(parts)} fields"
                )
            words.append(parts[0])
            rows.append(np.asarray([float(v) for v in parts[1:]], dtype=np.float32))
    if len(words) != vocab_size:
        raise DataError(
            f"{path}: header promises {vocab_size} entries, file has {len(words)}"
        )
    return WordVectors(words, np.stack(rows))


def _load_binary(path: Path) -> WordVectors:
    data = path.read_bytes()
    newline = data.find(b"\n")
    if newline < 0:
        raise DataError(f"{path}: missing header line")
    vocab_size, dim = _parse_header(data[:newline], path)
    row_bytes = dim * 4
    words: list[str] = []
    rows: list[np.ndarray] = []
    pos = newline + 1
    for _ in range(vocab_size):
        # Word bytes run to the separating space; skip leading newlines left
        # over from the previous entry.
        while pos < len(data) and data[pos : pos + 1] == b"\n":
            pos += 1
        space = data.find(b" ", pos)
        if space < 0 or space + row_bytes > len(data):
            raise DataError(f"{path}: truncated after {len(words)} entries")
        try:
            words.append(data[pos:space].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise DataError(f"{path}: undecodable word at byte {pos}") from exc
        rows.append(np.frombuffer(data[space + 1 : space + 1 + row_bytes], dtype="<f4"))
        pos = space + 1 + row_bytes
    return WordVectors(words, np.stack(rows))


def load_word_vectors(path: str | Path, format: str = "auto") -> WordVectors:
    """Read a word-vector file; 'auto' treats .bin as binary, all else as text."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"word-vector file not found: {path}")
    if format == "auto":
        format = "binary" if path.suffix == ".bin" else "text"
    if format == "binary":
        return _load_binary(path)
    if format == "text":
        return _load_text(path)
    raise DataError(f"unknown word-vector format '{format}'; use text, binary, or auto")


def write_word_vectors_text(words, matrix, path: str | Path) -> None:
    """Emit the text layout; handy for fixtures and for shrinking a model."""
    matrix = np.asarray(matrix)
    lines = [f"{len(words)} {matrix.shape[1]}"]
    for word, row in zip(words, matrix):
        lines.append(word + " " + " ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_word_vectors_binary(words, matrix, path: str | Path) -> None:
    matrix = np.asarray(matrix, dtype="<f4")
    parts = [f"{len(words)} {matrix.shape[1]}\n".encode()]
    for word, row in zip(words, matrix):
        parts.append(word.encode("utf-8") + b" " + row.tobytes() + b"\n")
    Path(path).write_bytes(b"".join(parts))
