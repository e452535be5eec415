"""Command-line entry points.

extract-class-embeddings --manifest job.json [--skip-oov]
extract-feature-embeddings --manifest job.json --embedder plugin.py:embed

Exit codes match the consumer package: 0 success, 2 configuration error,
3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .classes import extract_class_embeddings
from .errors import ConfigError, DataError
from .features import extract_feature_embeddings, load_embedder
from .manifest import load_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _run(fn) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        return fn()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def class_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="extract-class-embeddings",
        description="Average word vectors over each class label and its synonyms.",
    )
    parser.add_argument("--manifest", required=True, help="extraction manifest JSON")
    parser.add_argument(
        "--skip-oov", action="store_true",
        help="drop classes with no in-vocabulary tokens instead of failing",
    )
    args = parser.parse_args(argv)

    def job() -> int:
        manifest = load_manifest(args.manifest)
        path, report = extract_class_embeddings(manifest, skip_oov=args.skip_oov)
        written = len(report["classes_written"])
        print(f"wrote {written} class embeddings to {path}")
        if report["skipped"]:
            print(f"skipped {len(report['skipped'])}: {report['skipped']}")
        if report["oov_tokens"]:
            print(f"out-of-vocabulary tokens recorded in {path}.report.json")
        return EXIT_OK

    return _run(job)


def feature_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="extract-feature-embeddings",
        description="Embed every clip in the manifest with a user-supplied model.",
    )
    parser.add_argument("--manifest", required=True, help="extraction manifest JSON")
    parser.add_argument(
        "--embedder", required=True,
        help="trained embedder as 'module:callable' or 'plugin.py:callable'; "
        "the callable maps (waveform, sample_rate) to a 128-dim vector",
    )
    args = parser.parse_args(argv)

    def job() -> int:
        manifest = load_manifest(args.manifest)
        embedder = load_embedder(args.embedder)
        path, report = extract_feature_embeddings(manifest, embedder)
        print(f"wrote {report['clips_written']} feature embeddings to {path}")
        if report["skipped"]:
            print(f"skipped {len(report['skipped'])} undecodable clip(s), "
                  f"see {path}.report.json")
        return EXIT_OK

    return _run(job)


def _module_main() -> int:
    argv = sys.argv[1:]
    if argv[:1] == ["classes"]:
        return class_main(argv[1:])
    if argv[:1] == ["features"]:
        return feature_main(argv[1:])
    print("usage: python -m extract_embeddings.cli {classes|features} ...",
          file=sys.stderr)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(_module_main())
