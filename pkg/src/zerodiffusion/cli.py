"""Command-line interface.

Subcommands: run (one experiment from a JSON config), synth (emit a synthetic
benchmark to files), check (numeric self-tests), partitions (print built-in
seen/unseen tables). Exit codes: 0 success, 2 configuration error, 3 data
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import cross_entropy_loss, warp_loss
from .diffusion import (
    DiffusionModel,
    LossWeights,
    _backward,
    _forward,
    _loss_and_grad,
    _mmd_and_grad,
    corrupt,
    loss_components,
)
from .embeddings import (
    SynthConfig,
    builtin_datasets,
    builtin_partitions,
    dataset_label_universe,
    synth_benchmark,
    write_class_embeddings,
    write_feature_table,
    write_partition,
)
from .errors import ConfigError, DataError, NumericalError
from .harness import (
    emit_report,
    format_mean_std,
    load_config,
    run_experiment,
)
from .numerics import Rng, clip_global_norm, finite_diff_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

_REPORT_BASENAME = "report"
_SUFFIX = {"text": ".txt", "json": ".json", "markdown": ".md"}


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.method is not None:
        overrides["method"] = args.method
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.reps is not None:
        overrides["repetitions"] = args.reps
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.format is not None:
        overrides["format"] = args.format
    if overrides:
        config = dataclasses.replace(config, **overrides)
    report = run_experiment(config)
    out_dir = Path(config.output_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = emit_report(
        report, config.format, out_dir / (_REPORT_BASENAME + _SUFFIX[config.format])
    )
    print(
        f"{report.partition} {report.method}: {format_mean_std(report.mean, report.std)}"
    )
    print(f"report written to {path}")
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        seen_classes=args.seen,
        unseen_classes=args.unseen,
        samples_per_class=args.samples,
        feature_dim=args.feature_dim,
        class_dim=args.class_dim,
        feature_noise=args.feature_noise,
        coupling_noise=args.coupling_noise,
    )
    records, classes, spec = synth_benchmark(config, Rng(args.seed).stream("benchmark"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_feature_table(records, out / "features.jsonl")
    write_class_embeddings(classes, out / "classes.jsonl")
    write_partition(spec, out / "partition.json")
    print(
        f"wrote {len(records)} records, {len(classes)} classes "
        f"({config.seen_classes} seen / {config.unseen_classes} unseen) to {out}"
    )
    return EXIT_OK


def _cmd_partitions(args: argparse.Namespace) -> int:
    datasets = [args.dataset] if args.dataset else builtin_datasets()
    for dataset in datasets:
        universe = dataset_label_universe(dataset)
        print(f"{dataset} ({len(universe)} classes)")
        for spec in builtin_partitions(dataset):
            print(
                f"  {spec.name}: unseen[{len(spec.unseen_classes)}] = "
                f"{', '.join(spec.unseen_classes)}"
            )
            print(f"    seen[{len(spec.seen_classes)}] = {', '.join(spec.seen_classes)}")
    return EXIT_OK


def _check_corrupt_identity() -> bool:
    rng = Rng(11)
    vectors = rng.stream("check").normal(size=(100, 16))
    out = corrupt(vectors, 0.0, rng.stream("check", "noise"))
    return bool(np.array_equal(out, vectors))


def _check_clip() -> bool:
    grads = {"g": np.array([[3.0, 4.0]])}
    clipped, norm = clip_global_norm(grads, 1.0)
    return abs(norm - 5.0) < 1e-12 and np.allclose(clipped["g"], [[0.6, 0.8]])


def _check_mmd() -> bool:
    rng = Rng(23).stream("check")
    for _ in range(5):
        x = rng.normal(size=(12, 6))
        y = rng.normal(size=(12, 6))
        if loss_components(x, x).mmd >= 1e-10:
            return False
        if loss_components(x, y).mmd < 0:
            return False
    return True


def _check_quadratic_gradient() -> bool:
    def loss(params):
        p = params["p"]
        return 0.5 * float((p * p).sum()), {"p": p.copy()}

    params = {"p": Rng(5).stream("check").normal(size=(3, 3))}
    return finite_diff_check(loss, params) < 1e-7


def _check_diffusion_gradient() -> bool:
    rng = Rng(7)
    model = DiffusionModel.init(4, 3, rng.stream("init"), hidden_dim=8)
    noisy = rng.stream("noisy").normal(size=(4, 4))
    cond = rng.stream("cond").normal(size=(4, 3))
    real = rng.stream("real").normal(size=(4, 4))
    base, _ = _forward(model, noisy, cond, None, training=False)
    # The bandwidth is held fixed across perturbed evaluations; the loss
    # treats it as a constant under differentiation.
    _, _, bandwidth = _mmd_and_grad(base, real, None)

    def loss(params):
        probe = DiffusionModel(
            w1=params["w1"], b1=params["b1"], w2=params["w2"], b2=params["b2"]
        )
        out, cache = _forward(probe, noisy, cond, None, training=False)
        _, total, grad_out = _loss_and_grad(out, real, LossWeights(), bandwidth=bandwidth)
        return total, _backward(probe, cache, grad_out)

    return finite_diff_check(loss, model.params()) < 1e-4


def _check_classifier_gradients() -> bool:
    rng = Rng(9).stream("check")
    rows = rng.normal(size=(6, 5))
    targets = rng.integers(0, 5, size=6)

    def ce(params):
        loss, grad = cross_entropy_loss(params["rows"], targets)
        return loss, {"rows": grad}

    def warp(params):
        loss, grad = warp_loss(params["rows"], targets, Rng(1).stream("warp"))
        return loss, {"rows": grad}

    ok_ce = finite_diff_check(ce, {"rows": rows.copy()}) < 1e-6
    ok_warp = finite_diff_check(warp, {"rows": rows.copy()}) < 1e-6
    return ok_ce and ok_warp


def _cmd_check(_args: argparse.Namespace) -> int:
    checks = [
        ("corrupt identity at zero noise scale", _check_corrupt_identity),
        ("global-norm clipping", _check_clip),
        ("mmd self-distance and non-negativity", _check_mmd),
        ("quadratic-loss gradient", _check_quadratic_gradient),
        ("diffusion-loss gradient", _check_diffusion_gradient),
        ("classifier-loss gradients", _check_classifier_gradients),
    ]
    failed = 0
    for name, fn in checks:
        try:
            ok = fn()
        except Exception as exc:
            ok = False
            print(f"FAIL {name}: {exc}")
        else:
            print(("PASS " if ok else "FAIL ") + name)
        if not ok:
            failed += 1
    if failed:
        raise NumericalError(f"{failed} self-check(s) failed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zerodiffusion",
        description="Zero-shot audio classification with embedding-space diffusion.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a JSON config")
    run.add_argument("--config", required=True, help="path to the experiment config")
    run.add_argument("--method", choices=("zerodiffusion", "ale"))
    run.add_argument("--seed", type=int)
    run.add_argument("--reps", type=int)
    run.add_argument("--out", help="output directory for the report")
    run.add_argument("--format", choices=("text", "json", "markdown"))
    run.set_defaults(fn=_cmd_run)

    synth = sub.add_parser("synth", help="write a synthetic benchmark to files")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)
    defaults = SynthConfig()
    synth.add_argument("--seen", type=int, default=defaults.seen_classes)
    synth.add_argument("--unseen", type=int, default=defaults.unseen_classes)
    synth.add_argument("--samples", type=int, default=defaults.samples_per_class)
    synth.add_argument("--feature-dim", type=int, default=defaults.feature_dim)
    synth.add_argument("--class-dim", type=int, default=defaults.class_dim)
    synth.add_argument("--feature-noise", type=float, default=defaults.feature_noise)
    synth.add_argument("--coupling-noise", type=float, default=defaults.coupling_noise)
    synth.set_defaults(fn=_cmd_synth)

    check = sub.add_parser("check", help="run numeric self-tests")
    check.set_defaults(fn=_cmd_check)

    parts = sub.add_parser("partitions", help="print built-in partition tables")
    parts.add_argument("--dataset")
    parts.set_defaults(fn=_cmd_partitions)
    return parser


def _exit_code_for(exc: Exception) -> int | None:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, (FileNotFoundError, IsADirectoryError)):
        return EXIT_DATA
    return None


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:
        # Stage errors wrap their cause; classify by the innermost known type.
        for candidate in (exc, exc.__cause__):
            if candidate is None:
                continue
            code = _exit_code_for(candidate)
            if code is not None:
                print(f"error: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
