"""Summary tables and dependency-free SVG figures from the metrics CSV."""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .train import METRICS_HEADER, write_summary_csv

log = logging.getLogger(__name__)

COLORS = {"QNN1": "#1f77b4", "CNN1": "#d62728", "QNN2": "#2ca02c", "CNN2": "#ff7f0e"}
FALLBACK_COLORS = ("#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
MODEL_ORDER = ("QNN1", "CNN1", "QNN2", "CNN2")
SCENARIOS = {"s1": ("QNN1", "CNN1"), "s2": ("QNN2", "CNN2")}

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 130, 40, 55


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise ValueError(f"{path}: expected header {','.join(METRICS_HEADER)}")
        rows = []
        for r in reader:
            rows.append({
                "model": r["model"], "train_size": int(r["train_size"]),
                "fold": int(r["fold"]), "epoch": int(r["epoch"]),
                **{k: float(r[k]) for k in METRICS_HEADER[4:]},
            })
    return rows


def _model_key(name):
    return (MODEL_ORDER.index(name) if name in MODEL_ORDER else len(MODEL_ORDER), name)


def fold_finals(rows) -> dict[tuple, dict]:
    """Best-epoch row per (model, size, fold): the first epoch with minimum monitor loss."""
    best: dict[tuple, dict] = {}
    for r in rows:
        key = (r["model"], r["train_size"], r["fold"])
        cur = best.get(key)
        if cur is None or r["monitor_loss"] < cur["monitor_loss"] or (
            r["monitor_loss"] == cur["monitor_loss"] and r["epoch"] < cur["epoch"]
        ):
            best[key] = r
    return best


def summarize(rows, n_folds: int = 10) -> list[dict]:
    """Mean and population std of best-epoch test accuracy per (model, size)."""
    groups: dict[tuple, dict[int, float]] = defaultdict(dict)
    for (model, size, fold), r in fold_finals(rows).items():
        groups[(model, size)][fold] = r["test_acc"]
    out = []
    for (model, size) in sorted(groups, key=lambda k: (_model_key(k[0]), k[1])):
        accs = groups[(model, size)]
        missing = sorted(set(range(n_folds)) - set(accs))
        if missing:
            log.warning("%s at size %d is missing folds %s; statistics use %d folds",
                        model, size, missing, len(accs))
        v = np.array([accs[f] for f in sorted(accs)])
        out.append({"model": model, "train_size": size,
                    "mean_test_acc": float(v.mean()), "std_test_acc": float(v.std())})
    return out


# -- SVG ------------------------------------------------------------------------

class Frame:
    """Linear data-to-pixel mapping for one plot panel (y grows upward in data space)."""

    def __init__(self, x0, x1, y0, y1, left=LEFT, top=TOP, width=WIDTH - LEFT - RIGHT, height=HEIGHT - TOP - BOTTOM):
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.left, self.top, self.width, self.height = left, top, width, height

    def px(self, x):
        return self.left + (x - self.x0) / (self.x1 - self.x0) * self.width

    def py(self, y):
        return self.top + (self.y1 - y) / (self.y1 - self.y0) * self.height

    def attrs(self, prefix="") -> str:
        return (f'data-{prefix}x0="{self.x0:g}" data-{prefix}x1="{self.x1:g}" '
                f'data-{prefix}y0="{self.y0:g}" data-{prefix}y1="{self.y1:g}" '
                f'data-{prefix}left="{self.left}" data-{prefix}top="{self.top}" '
                f'data-{prefix}width="{self.width}" data-{prefix}height="{self.height}"')


def _pts(points) -> str:
    return " ".join(f"{x:.3f},{y:.3f}" for x, y in points)


def _color(model, i):
    return COLORS.get(model, FALLBACK_COLORS[i % len(FALLBACK_COLORS)])


def _nice_ticks(lo, hi, n=5):
    span = hi - lo
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * span:
        ticks.append(round(t, 10))
        t += step
    return ticks


def _axes(fr: Frame, xlabel, ylabel, xticks=None) -> list[str]:
    b = fr.top + fr.height
    out = [
        f'<rect x="{fr.left}" y="{fr.top}" width="{fr.width}" height="{fr.height}" fill="none" stroke="#333"/>',
    ]
    for t in (xticks if xticks is not None else _nice_ticks(fr.x0, fr.x1)):
        x = fr.px(t)
        out.append(f'<line x1="{x:.3f}" y1="{b}" x2="{x:.3f}" y2="{b + 5}" stroke="#333"/>')
        out.append(f'<text x="{x:.3f}" y="{b + 18}" text-anchor="middle" font-size="11">{t:g}</text>')
    for t in _nice_ticks(fr.y0, fr.y1):
        y = fr.py(t)
        out.append(f'<line x1="{fr.left - 5}" y1="{y:.3f}" x2="{fr.left}" y2="{y:.3f}" stroke="#333"/>')
        out.append(f'<line x1="{fr.left}" y1="{y:.3f}" x2="{fr.left + fr.width}" y2="{y:.3f}" stroke="#ddd"/>')
        out.append(f'<text x="{fr.left - 8}" y="{y + 4:.3f}" text-anchor="end" font-size="11">{t:g}</text>')
    out.append(f'<text x="{fr.left + fr.width / 2:.1f}" y="{b + 38}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    cy = fr.top + fr.height / 2
    out.append(f'<text x="{fr.left - 48}" y="{cy:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 {fr.left - 48} {cy:.1f})">{escape(ylabel)}</text>')
    return out


def _legend(models, x, y) -> list[str]:
    out = []
    for i, m in enumerate(models):
        yy = y + 20 * i
        c = _color(m, i)
        out.append(f'<g class="legend" data-model="{escape(m)}">'
                   f'<rect x="{x}" y="{yy - 9}" width="14" height="10" fill="{c}" fill-opacity="0.25" stroke="{c}"/>'
                   f'<text x="{x + 20}" y="{yy}" font-size="12">{escape(m)}</text></g>')
    return out


def _svg(body: list[str], title: str, extra_attrs: str = "", height: int = HEIGHT) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
            f'viewBox="0 0 {WIDTH} {height}" {extra_attrs}>')
    return "\n".join([
        '<?xml version="1.0" encoding="UTF-8"?>', head,
        f'<rect width="{WIDTH}" height="{height}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        *body, "</svg>", "",
    ])


def plot_learning_curves(summary, models=None, title="Test accuracy vs training samples") -> str:
    """Mean accuracy per training size with a shaded mean +/- 1 std band per model."""
    rows = [r for r in summary if models is None or r["model"] in models]
    if not rows:
        raise ValueError("nothing to plot: summary is empty for the requested models")
    names = sorted({r["model"] for r in rows}, key=_model_key)
    sizes = sorted({r["train_size"] for r in rows})
    hi = max(1.0, max(r["mean_test_acc"] + r["std_test_acc"] for r in rows))
    lo = min(0.0, min(r["mean_test_acc"] - r["std_test_acc"] for r in rows))
    fr = Frame(sizes[0], sizes[-1], lo, hi)
    body = _axes(fr, "training samples", "test accuracy", xticks=sizes)
    for i, m in enumerate(names):
        pts = sorted((r for r in rows if r["model"] == m), key=lambda r: r["train_size"])
        xs = [fr.px(r["train_size"]) for r in pts]
        upper = [(x, fr.py(r["mean_test_acc"] + r["std_test_acc"])) for x, r in zip(xs, pts)]
        lower = [(x, fr.py(r["mean_test_acc"] - r["std_test_acc"])) for x, r in zip(xs, pts)]
        mean = [(x, fr.py(r["mean_test_acc"])) for x, r in zip(xs, pts)]
        c = _color(m, i)
        body.append(f'<polygon class="band" data-model="{escape(m)}" points="{_pts(upper + lower[::-1])}" '
                    f'fill="{c}" fill-opacity="0.2" stroke="none"/>')
        body.append(f'<polyline class="mean" data-model="{escape(m)}" points="{_pts(mean)}" '
                    f'fill="none" stroke="{c}" stroke-width="2"/>')
        body += [f'<circle cx="{x:.3f}" cy="{y:.3f}" r="3" fill="{c}"/>' for x, y in mean]
    body += _legend(names, WIDTH - RIGHT + 20, TOP + 15)
    return _svg(body, title, fr.attrs())


def epoch_curves(rows, size: int) -> dict[str, dict[str, np.ndarray]]:
    """Per model: epoch axis and fold-mean test accuracy/loss over folds still training."""
    per: dict[str, dict[int, list]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if r["train_size"] == size:
            per[r["model"]][r["epoch"]].append((r["test_acc"], r["test_loss"]))
    out = {}
    for m in sorted(per, key=_model_key):
        epochs = sorted(per[m])
        vals = [np.mean(per[m][e], axis=0) for e in epochs]
        out[m] = {"epoch": np.array(epochs), "acc": np.array([v[0] for v in vals]),
                  "loss": np.array([v[1] for v in vals])}
    return out


def plot_epoch_curves(rows, size: int, title=None) -> str:
    """Test accuracy (top panel) and test loss (bottom panel) against epoch for one size."""
    curves = epoch_curves(rows, size)
    if not curves:
        raise ValueError(f"no metrics for training size {size}")
    height = 2 * HEIGHT - TOP - 20
    panel_h = HEIGHT - TOP - BOTTOM
    max_epoch = max(int(c["epoch"][-1]) for c in curves.values())
    max_loss = max(float(np.max(c["loss"])) for c in curves.values())
    top = Frame(1, max_epoch, 0.0, 1.0, top=TOP, height=panel_h)
    bot = Frame(1, max_epoch, 0.0, max(max_loss, 1e-6), top=TOP + panel_h + BOTTOM + 10, height=panel_h)
    body = _axes(top, "epoch", "test accuracy") + _axes(bot, "epoch", "test loss")
    for i, (m, c) in enumerate(curves.items()):
        col = _color(m, i)
        for fr, key in ((top, "acc"), (bot, "loss")):
            pts = [(fr.px(e), fr.py(v)) for e, v in zip(c["epoch"], c[key])]
            body.append(f'<polyline class="{key}" data-model="{escape(m)}" points="{_pts(pts)}" '
                        f'fill="none" stroke="{col}" stroke-width="1.5"/>')
    body += _legend(list(curves), WIDTH - RIGHT + 20, TOP + 15)
    return _svg(body, title or f"Test accuracy and loss per epoch, {size} training samples",
                top.attrs("top-") + " " + bot.attrs("bottom-"), height)


def write_reports(rows, out_dir, n_folds: int = 10, epoch_sizes=(60, 240)) -> list[Path]:
    """Summary CSV plus every figure whose models/sizes are present in ``rows``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = summarize(rows, n_folds)
    written = [out_dir / "summary.csv"]
    write_summary_csv(written[0], summary)
    present = {r["model"] for r in summary}
    for tag, models in SCENARIOS.items():
        if present & set(models):
            p = out_dir / f"fig_learning_curve_{tag}.svg"
            p.write_text(plot_learning_curves(summary, models, f"Test accuracy vs training samples ({', '.join(m for m in models if m in present)})"))
            written.append(p)
    sizes = {r["train_size"] for r in rows}
    for size in epoch_sizes:
        if size in sizes:
            p = out_dir / f"fig_epochs_{size}.svg"
            p.write_text(plot_epoch_curves(rows, size))
            written.append(p)
    return written
