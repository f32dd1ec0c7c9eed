"""``quanvo`` command line.

Every subcommand exits 0 only when all of its outputs were written. On failure
a single JSON object describing the error is printed to stderr and the exit
code is 1 (2 for configuration or usage errors).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, pipeline
from .config import ConfigError, load_config
from .data import read_manifest
from .nn import MODEL_NAMES, save_weights
from .quanv import QuanvFilter, image_set_hash, read_cache, transform_dataset
from .report import read_metrics_csv, write_reports
from .selftest import LAYER_KINDS, gradcheck, run_selftest

log = logging.getLogger("quanvo")


class CommandFailed(RuntimeError):
    """Raised by a subcommand that ran but could not produce every output."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


def _config(args, **overrides):
    """Load ``--config`` with CLI flags applied as highest-priority overrides."""
    env = dict(os.environ)
    for key, value in overrides.items():
        if value is not None:
            env[f"QUANVO_{key.upper()}"] = str(value)
    return load_config(args.config, env)


def cmd_preprocess(args) -> int:
    cfg = _config(args)
    manifest_path = Path(args.manifest)
    manifest = read_manifest(manifest_path)
    res = pipeline.preprocess(manifest, args.out, cfg.dsp, manifest_path.parent, cfg.sample_rate)
    print(f"{len(res.written)} written, {len(res.skipped)} unchanged, {len(res.failed)} failed -> {args.out}")
    if res.failed:
        raise CommandFailed(f"{len(res.failed)} of {len(manifest)} clips failed",
                            errors_file=str(Path(args.out) / "errors.txt"), failed=[k for k, _ in res.failed])
    return 0


def cmd_quanv(args) -> int:
    _, images, _ = pipeline.load_image_set(args.images)
    flt = QuanvFilter.from_seed(args.seed, args.n_gates, args.stride)
    print(flt.circuit.summary())
    if args.show_gates:
        print(flt.circuit.dumps(), end="")
    out = transform_dataset(list(images), flt, args.out)
    read_cache(args.out, flt, image_set_hash(list(images)))  # validate what was written
    print(f"{len(out)} tensors of shape {out[0].shape} -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args, data__seed=args.data_seed, train__seed=args.seed, train__max_epochs=args.max_epochs)
    model, res = pipeline.train_single(cfg, args.model, args.size, args.fold)
    save_weights(args.out, model)
    best = res.history[res.best_epoch - 1]
    print(json.dumps({
        "model": model.name, "train_size": args.size, "fold": args.fold,
        "stop_epoch": res.stop_epoch, "best_epoch": res.best_epoch,
        "monitor_loss": best.monitor_loss, "test_acc": round(best.test_acc, 4), "checkpoint": str(args.out),
    }))
    return 0


def cmd_experiment(args) -> int:
    cfg = _config(args, experiment__models=args.models, experiment__workers=args.workers,
                  experiment__out_dir=args.out_dir)
    total = len(cfg.models) * len(cfg.sizes) * cfg.train.folds
    done = 0

    def progress(r):
        nonlocal done
        done += 1
        if not args.quiet:
            print(f"[{done}/{total}] {r.model} n={r.train_size} fold={r.fold} "
                  f"stop={r.stop_epoch} best={r.best_epoch} test_acc={r.test_acc:.4f}", flush=True)

    written = pipeline.run(cfg, progress)
    for p in written:
        print(p)
    return 0


def cmd_report(args) -> int:
    rows = read_metrics_csv(args.metrics)
    out = Path(args.out or Path(args.metrics).parent)
    out.mkdir(parents=True, exist_ok=True)
    for p in write_reports(rows, out, args.folds, tuple(args.epoch_sizes)):
        print(p)
    return 0


def cmd_gradcheck(args) -> int:
    results = gradcheck(args.kinds, args.instances, args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.kind:<14} #{r.instance} max rel err {r.error:.3e}")
    failed = [f"{r.kind}#{r.instance}" for r in results if not r.passed]
    if failed:
        raise CommandFailed("gradient check failed", failed=failed)
    return 0


def cmd_selftest(args) -> int:
    checks = run_selftest()
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise CommandFailed("self-test failed", failed=failed)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quanvo", description="Quanvolutional vs convolutional audio classifiers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="INI config file (default: built-in defaults)")
        return sp

    sp = with_config(sub.add_parser("preprocess", help="audio manifest -> QVIMG1 images + index.csv"))
    sp.add_argument("--manifest", required=True, help="CSV manifest (audio or synthetic)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("quanv", help="preprocessed images -> QVCACHE1 quanvolutional cache")
    sp.add_argument("--images", required=True, help="directory written by preprocess")
    sp.add_argument("--seed", type=int, default=42, help="circuit seed (default 42)")
    sp.add_argument("--n-gates", type=int, default=8, help="random gates in the circuit (default 8)")
    sp.add_argument("--stride", type=int, default=2, help="patch stride (default 2)")
    sp.add_argument("--out", required=True, help="cache file to write")
    sp.add_argument("--show-gates", action="store_true", help="print the full gate list")
    sp.set_defaults(func=cmd_quanv)

    sp = with_config(sub.add_parser("train", help="train one (model, size, fold) cell and save a checkpoint"))
    sp.add_argument("--model", required=True, type=str.upper, choices=MODEL_NAMES)
    sp.add_argument("--size", type=int, default=240, help="training subsample size (default 240)")
    sp.add_argument("--fold", type=int, default=0, help="held-out fold index (default 0)")
    sp.add_argument("--seed", type=int, help="training seed (overrides [train] seed)")
    sp.add_argument("--data-seed", type=int, help="data seed (overrides [data] seed)")
    sp.add_argument("--max-epochs", type=int, help="overrides [train] max_epochs")
    sp.add_argument("--out", required=True, help="QVWTS1 checkpoint path")
    sp.set_defaults(func=cmd_train)

    sp = with_config(sub.add_parser("experiment", help="full learning-curve grid -> CSVs + SVGs"))
    sp.add_argument("--models", help="comma-separated subset, e.g. qnn1,cnn1")
    sp.add_argument("--workers", type=int, help="parallel workers (0 = all cores)")
    sp.add_argument("--out-dir", help="overrides [experiment] out_dir")
    sp.add_argument("-q", "--quiet", action="store_true", help="no per-fold progress lines")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("report", help="metrics.csv -> summary.csv + SVG figures")
    sp.add_argument("--metrics", required=True)
    sp.add_argument("--out", help="output directory (default: next to metrics.csv)")
    sp.add_argument("--folds", type=int, default=10, help="expected folds per cell (default 10)")
    sp.add_argument("--epoch-sizes", type=int, nargs="+", default=[60, 240], help="sizes for epoch plots")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient checks for every layer kind")
    sp.add_argument("--kinds", nargs="+", choices=LAYER_KINDS, default=list(LAYER_KINDS))
    sp.add_argument("--instances", type=int, default=5, help="random instances per kind (default 5)")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("selftest", help="oracle and invariant checks")
    sp.set_defaults(func=cmd_selftest)
    return p


def _fail(command: str, exc: BaseException, code: int) -> int:
    record = {"command": command, "error": type(exc).__name__, "message": str(exc)}
    record.update(getattr(exc, "details", {}))
    if isinstance(exc, ConfigError):
        record["problems"] = exc.problems
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(args.command, exc, 2)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable record
        log.debug("command failed", exc_info=True)
        return _fail(args.command, exc, 1)


if __name__ == "__main__":
    sys.exit(main())
