"""End-to-end orchestration: manifest -> image cache -> quanv cache -> experiment -> reports."""
from __future__ import annotations

import csv
import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as dmod
from .config import ExperimentConfig, dump_config
from .dsp import DspConfig, clip_to_image, load_image, save_image
from .quanv import QuanvFilter, transform_dataset
from .report import read_metrics_csv, write_reports
from .train import ExperimentData, fit_fold, run_experiment, write_metrics_csv

log = logging.getLogger(__name__)

INDEX_HEADER = ("key", "label", "file", "source_hash")


@dataclass
class PreprocessResult:
    written: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed


def _file_stem(key: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]+", "_", key).strip("_")[-60:]
    return f"{safe}-{hashlib.sha1(key.encode()).hexdigest()[:8]}"


def _source_hash(entry, dsp: DspConfig, sample_rate: int, base_dir) -> str:
    h = hashlib.sha256(repr((entry, dsp, sample_rate)).encode())
    if isinstance(entry, dmod.AudioEntry):
        p = Path(entry.path)
        h.update((p if p.is_absolute() else Path(base_dir) / p).read_bytes())
    return h.hexdigest()


def _read_index(out_dir: Path) -> dict[str, dict]:
    path = out_dir / "index.csv"
    if not path.exists():
        return {}
    with open(path, newline="") as fh:
        return {r["key"]: r for r in csv.DictReader(fh)}


def preprocess(manifest: dmod.DatasetManifest, out_dir, dsp: DspConfig = DspConfig(),
               base_dir=".", sample_rate: int = 44100) -> PreprocessResult:
    """Write one QVIMG1 image per manifest entry plus ``index.csv``.

    Entries whose source hash matches the existing index are left untouched.
    Failures are collected into ``errors.txt`` instead of aborting the run.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    previous = _read_index(out_dir)
    result = PreprocessResult()
    rows = []
    for entry in manifest.entries:
        try:
            src = _source_hash(entry, dsp, sample_rate, base_dir)
            rel = f"images/{_file_stem(entry.key)}.qvimg"
            old = previous.get(entry.key)
            if old and old["source_hash"] == src and old["file"] == rel and (out_dir / rel).exists():
                result.skipped.append(entry.key)
            else:
                clip = dmod.load_clip(entry, base_dir, dsp.duration_s, sample_rate)
                save_image(out_dir / rel, clip_to_image(clip, dsp))
                result.written.append(entry.key)
            rows.append((entry.key, entry.label, rel, src))
        except Exception as exc:  # noqa: BLE001 - every failure is reported per entry
            result.failed.append((entry.key, f"{type(exc).__name__}: {exc}"))
    with open(out_dir / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDEX_HEADER)
        w.writerows(rows)
    errors = out_dir / "errors.txt"
    if result.failed:
        errors.write_text("".join(f"{k}\t{msg}\n" for k, msg in result.failed))
    elif errors.exists():
        errors.unlink()
    return result


def load_image_set(out_dir) -> tuple[list[str], np.ndarray, np.ndarray]:
    """(keys, images, labels) from a preprocessed directory, in index order."""
    out_dir = Path(out_dir)
    index = _read_index(out_dir)
    if not index:
        raise FileNotFoundError(f"{out_dir / 'index.csv'} is missing or empty; run preprocess first")
    keys = list(index)
    images = np.stack([load_image(out_dir / index[k]["file"]) for k in keys])
    labels = np.array([dmod.label_index(index[k]["label"]) for k in keys], dtype=np.int64)
    return keys, images, labels


def resolve_manifest(cfg: ExperimentConfig, cache_dir: Path) -> tuple[dmod.DatasetManifest, Path]:
    path = cfg.manifest_path()
    if path is not None:
        return dmod.read_manifest(path), path.parent
    d = cfg.data
    manifest = dmod.synthetic_manifest(d.synthetic_dysphonia, d.synthetic_healthy, d.seed, d.synthetic_severity_sd)
    cache_dir.mkdir(parents=True, exist_ok=True)
    dmod.write_manifest(cache_dir / "synthetic_manifest.csv", manifest)
    return manifest, cache_dir


def quanv_filter(cfg: ExperimentConfig) -> QuanvFilter:
    return QuanvFilter.from_seed(cfg.quanv.seed, cfg.quanv.n_gates, cfg.quanv.stride)


def prepare_data(cfg: ExperimentConfig) -> ExperimentData:
    """Preprocess (or reuse) images, quanv-transform them, and split train pool / test set."""
    cache = cfg.out_path / "cache"
    manifest, base = resolve_manifest(cfg, cache)
    res = preprocess(manifest, cache, cfg.dsp, base, cfg.sample_rate)
    if not res.ok:
        raise RuntimeError(f"{len(res.failed)} clips failed to preprocess; see {cache / 'errors.txt'}")
    _, images, labels = load_image_set(cache)
    qimgs = np.stack(transform_dataset(images, quanv_filter(cfg), cache / "quanv.qvcache"))
    plan = dmod.train_test_split(labels, cfg.data.n_test, max(cfg.sizes), seed=cfg.data.seed)
    return ExperimentData(images[plan.train], qimgs[plan.train], labels[plan.train],
                          images[plan.test], qimgs[plan.test], labels[plan.test])


def run(cfg: ExperimentConfig, progress=None) -> list[Path]:
    """Full experiment grid; returns every file written under ``cfg.out_path``."""
    out = cfg.out_path
    out.mkdir(parents=True, exist_ok=True)
    data = prepare_data(cfg)
    report = run_experiment(cfg.models, data, cfg.train, cfg.sizes, cfg.workers or None,
                            partial_path=out / "metrics.partial.csv", progress=progress)
    write_metrics_csv(out / "metrics.csv", report.metrics_rows())
    # figures and summary come from the CSV as written, same as the standalone report command
    rows = read_metrics_csv(out / "metrics.csv")
    (out / "config.resolved.ini").write_text(dump_config(cfg))
    written = [out / "metrics.csv", out / "config.resolved.ini"]
    written += write_reports(rows, out, cfg.train.folds)
    partial = out / "metrics.partial.csv"
    if partial.exists():
        partial.unlink()
    return written


def train_single(cfg: ExperimentConfig, model_name: str, size: int, fold: int = 0, data: ExperimentData | None = None):
    """Train one (model, size, fold) cell exactly as the grid would; returns ``(model, TrainResult)``."""
    return fit_fold(data if data is not None else prepare_data(cfg), model_name, size, fold, cfg.train)
