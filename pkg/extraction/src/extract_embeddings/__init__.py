"""Convert pretrained-model outputs into the zerodiffusion interchange formats.

Two jobs, both driven by a single manifest JSON: class embeddings come from
averaging word vectors over each label and its synonyms; feature embeddings
come from running a user-supplied trained audio embedder over the manifest's
clips. Outputs are exactly the JSONL tables the consumer package loads.
"""

from .audio import decode_wav, log_mel, mel_filterbank
from .classes import class_embedding_for, extract_class_embeddings
from .errors import AudioDecodeError, ConfigError, DataError
from .features import extract_feature_embeddings, load_embedder
from .manifest import (
    CLASS_DIM,
    FEATURE_DIM,
    AudioEntry,
    ExtractionManifest,
    load_manifest,
    load_synonyms,
    manifest_from_dict,
)
from .word_vectors import (
    WordVectors,
    load_word_vectors,
    tokenize,
    write_word_vectors_binary,
    write_word_vectors_text,
)

__version__ = "0.1.0"

__all__ = [
    "AudioDecodeError",
    "AudioEntry",
    "CLASS_DIM",
    "ConfigError",
    "DataError",
    "ExtractionManifest",
    "FEATURE_DIM",
    "WordVectors",
    "class_embedding_for",
    "decode_wav",
    "extract_class_embeddings",
    "extract_feature_embeddings",
    "load_embedder",
    "load_manifest",
    "load_synonyms",
    "load_word_vectors",
    "log_mel",
    "manifest_from_dict",
    "mel_filterbank",
    "tokenize",
    "write_word_vectors_binary",
    "write_word_vectors_text",
    "__version__",
]
