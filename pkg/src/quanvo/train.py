"""Early-stopped training and the learning-curve experiment grid."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .data import GRID_SIZES, kfold_split, stratified_subsample
from .nn import Adam, Sequential, TrainingDiverged, build_model, cross_entropy

log = logging.getLogger(__name__)

METRICS_HEADER = ("model", "train_size", "fold", "epoch", "train_loss", "train_acc",
                  "monitor_loss", "monitor_acc", "test_loss", "test_acc")
SUMMARY_HEADER = ("model", "train_size", "mean_test_acc", "std_test_acc")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 3000
    patience: int = 15
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < self.patience:
            raise ValueError(f"max_epochs ({self.max_epochs}) must be >= patience ({self.patience})")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


class EarlyStopping:
    """Stop once the monitored loss has failed to strictly improve for ``patience`` epochs.

    Epochs are 1-based. ``update`` returns True when training should stop.
    """

    def __init__(self, patience: int = 15):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0
        self.epoch = 0

    def update(self, loss: float) -> bool:
        self.epoch += 1
        if loss < self.best:
            self.best, self.best_epoch, self.wait = loss, self.epoch, 0
            return False
        self.wait += 1
        return self.wait >= self.patience

    @property
    def improved(self) -> bool:
        return self.best_epoch == self.epoch


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    monitor_loss: float
    monitor_acc: float
    test_loss: float = math.nan
    test_acc: float = math.nan


@dataclass
class TrainResult:
    weights: list
    history: list[EpochRecord]
    stop_epoch: int
    best_epoch: int


def evaluate(model: Sequential, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) in inference mode."""
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty set")
    correct, total_loss = 0, 0.0
    for start in range(0, len(y), batch_size):
        xb, yb = x[start:start + batch_size], y[start:start + batch_size]
        z = model.logits(xb, training=False)
        loss, _ = cross_entropy(z, yb)
        total_loss += loss * len(yb)
        correct += int((z.argmax(axis=1) == yb).sum())
    return correct / len(y), total_loss / len(y)


def train_model(model: Sequential, train_set, monitor_set, cfg: TrainConfig = TrainConfig(),
                test_set=None) -> TrainResult:
    """Mini-batch Adam with early stopping on ``monitor_set`` loss.

    The model is left holding the weights from the best monitored epoch.
    ``test_set`` is only evaluated for reporting; it never influences training.
    """
    x, y = train_set
    xm, ym = monitor_set
    if len(y) == 0 or len(ym) == 0:
        raise ValueError("training and monitor sets must be non-empty")
    if tuple(x.shape[1:]) != model.input_shape:
        raise ValueError(f"inputs of shape {x.shape[1:]} do not fit model input {model.input_shape}")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    stopper = EarlyStopping(cfg.patience)
    params = model.parameters()
    history: list[EpochRecord] = []
    best_weights = model.get_weights()

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(y))
        loss_sum, hits = 0.0, 0
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, z = model.loss_and_grads(x[idx], y[idx], training=True)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}", epoch)
            try:
                opt.step([layer.params[k] for layer, k in params], [layer.grads[k] for layer, k in params])
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"{exc} at epoch {epoch}", epoch) from None
            loss_sum += loss * len(idx)
            hits += int((z.argmax(axis=1) == y[idx]).sum())
        m_acc, m_loss = evaluate(model, xm, ym)
        if not math.isfinite(m_loss):
            raise TrainingDiverged(f"non-finite monitor loss at epoch {epoch}", epoch)
        t_acc, t_loss = evaluate(model, *test_set) if test_set is not None else (math.nan, math.nan)
        history.append(EpochRecord(epoch, loss_sum / len(y), hits / len(y), m_loss, m_acc, t_loss, t_acc))
        stop = stopper.update(m_loss)
        if stopper.improved:
            best_weights = model.get_weights()
        if stop:
            break

    model.set_weights(best_weights)
    return TrainResult(best_weights, history, history[-1].epoch, stopper.best_epoch)


# -- experiment grid ------------------------------------------------------------

@dataclass
class ExperimentData:
    """Training pool and fixed test set, in raw (40x100x1) and quanv (20x50x4) form."""

    pool_raw: np.ndarray
    pool_quanv: np.ndarray
    pool_labels: np.ndarray
    test_raw: np.ndarray
    test_quanv: np.ndarray
    test_labels: np.ndarray

    def pool(self, quanv: bool) -> np.ndarray:
        return self.pool_quanv if quanv else self.pool_raw

    def test(self, quanv: bool) -> tuple[np.ndarray, np.ndarray]:
        return (self.test_quanv if quanv else self.test_raw), self.test_labels


@dataclass
class FoldResult:
    model: str
    train_size: int
    fold: int
    history: list[EpochRecord]
    best_epoch: int
    stop_epoch: int

    @property
    def best(self) -> EpochRecord:
        return self.history[self.best_epoch - 1]

    @property
    def test_acc(self) -> float:
        return self.best.test_acc


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def experiment_plan(data: ExperimentData, size: int, cfg: TrainConfig):
    """Subsample and folds for one training size (shared by every model)."""
    sub = stratified_subsample(data.pool_labels, size, seed=_derive_seed(cfg.seed, size, 0))
    return kfold_split(sub, data.pool_labels[sub], cfg.folds, seed=_derive_seed(cfg.seed, size, 1))


_DATA: ExperimentData | None = None


def _init_worker(data: ExperimentData) -> None:
    global _DATA
    _DATA = data


def fit_fold(data: ExperimentData, model_name: str, size: int, fold: int, cfg: TrainConfig):
    """Build and train one grid cell; returns ``(model, TrainResult)`` with best weights loaded."""
    if not 0 <= fold < cfg.folds:
        raise ValueError(f"fold must be in [0, {cfg.folds}), got {fold}")
    spec = build_model(model_name)
    train_idx, val_idx = experiment_plan(data, size, cfg)[fold]
    pool, labels = data.pool(spec.quanv), data.pool_labels
    model = spec.build(_derive_seed(cfg.seed, size, fold, 2))
    fold_cfg = replace(cfg, seed=_derive_seed(cfg.seed, size, fold, 3))
    # single-threaded BLAS keeps floating-point reductions identical across worker counts
    with threadpool_limits(limits=1):
        res = train_model(model, (pool[train_idx], labels[train_idx]), (pool[val_idx], labels[val_idx]),
                          fold_cfg, test_set=data.test(spec.quanv))
    return model, res


def run_fold(data: ExperimentData, model_name: str, size: int, fold: int, cfg: TrainConfig) -> FoldResult:
    model, res = fit_fold(data, model_name, size, fold, cfg)
    return FoldResult(model.name, size, fold, res.history, res.best_epoch, res.stop_epoch)


def _job(args) -> FoldResult:
    return run_fold(_DATA, *args)


@dataclass
class ExperimentReport:
    results: list[FoldResult] = field(default_factory=list)

    def sorted(self) -> list[FoldResult]:
        order = {name: i for i, name in enumerate(("QNN1", "CNN1", "QNN2", "CNN2"))}
        return sorted(self.results, key=lambda r: (order.get(r.model, 99), r.model, r.train_size, r.fold))

    def metrics_rows(self) -> list[dict]:
        rows = []
        for r in self.sorted():
            for e in r.history:
                rows.append({
                    "model": r.model, "train_size": r.train_size, "fold": r.fold, "epoch": e.epoch,
                    "train_loss": e.train_loss, "train_acc": e.train_acc,
                    "monitor_loss": e.monitor_loss, "monitor_acc": e.monitor_acc,
                    "test_loss": e.test_loss, "test_acc": e.test_acc,
                })
        return rows

    def summary(self) -> list[dict]:
        """Mean and population std of best-epoch test accuracy (as written, 4 dp) per model and size."""
        groups: dict[tuple, list[float]] = {}
        for r in self.sorted():
            groups.setdefault((r.model, r.train_size), []).append(round4(r.test_acc))
        return [
            {"model": m, "train_size": s, "mean_test_acc": float(np.mean(v)), "std_test_acc": float(np.std(v))}
            for (m, s), v in groups.items()
        ]


def round4(x: float) -> float:
    return float(f"{x:.4f}")


def _fmt_metric(key: str, value) -> str:
    if key.endswith("_acc"):
        return f"{value:.4f}"
    if key.endswith("_loss"):
        return repr(float(value))
    return str(value)


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for row in rows:
            w.writerow([_fmt_metric(k, row[k]) for k in METRICS_HEADER])


def write_summary_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in rows:
            w.writerow([row["model"], row["train_size"], f"{row['mean_test_acc']:.6f}", f"{row['std_test_acc']:.6f}"])


def run_experiment(models, data: ExperimentData, cfg: TrainConfig = TrainConfig(),
                   sizes=GRID_SIZES, workers: int | None = 1, partial_path=None,
                   progress=None) -> ExperimentReport:
    """Train every (model, size, fold) cell and collect the per-epoch histories.

    Results are keyed by (model, size, fold), so the report does not depend on
    completion order or ``workers``. If a job fails and ``partial_path`` is
    given, the metrics gathered so far are written there before re-raising.
    """
    names = [build_model(m).name for m in models]
    largest = max(sizes)
    for quanv in {build_model(m).quanv for m in names}:
        if data.pool(quanv).shape[0] != len(data.pool_labels):
            raise ValueError("training pool arrays and labels disagree in length")
    stratified_subsample(data.pool_labels, largest)  # fails early if the pool is too small

    jobs = [(m, s, f, cfg) for m in names for s in sizes for f in range(cfg.folds)]
    report = ExperimentReport()
    workers = workers or os.cpu_count() or 1
    try:
        if workers == 1:
            for job in jobs:
                report.results.append(run_fold(data, *job))
                if progress:
                    progress(report.results[-1])
        else:
            with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(data,)) as pool:
                for res in pool.map(_job, jobs):
                    report.results.append(res)
                    if progress:
                        progress(res)
    except Exception:
        if partial_path is not None:
            write_metrics_csv(partial_path, report.metrics_rows())
            log.error("experiment failed; %d completed folds written to %s", len(report.results), partial_path)
        raise
    return report
