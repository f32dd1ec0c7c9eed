import logging
import math
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quanvo.report import (
    fold_finals,
    plot_epoch_curves,
    plot_learning_curves,
    read_metrics_csv,
    summarize,
    write_reports,
)
from quanvo.train import write_metrics_csv

SVG = "{http://www.w3.org/2000/svg}"


def row(model, size, fold, epoch, monitor_loss, test_acc, test_loss=0.5):
    return {"model": model, "train_size": size, "fold": fold, "epoch": epoch,
            "train_loss": 0.1, "train_acc": 0.9, "monitor_loss": monitor_loss, "monitor_acc": 0.9,
            "test_loss": test_loss, "test_acc": test_acc}


def fold_rows(model, size, accs):
    """One two-epoch history per fold whose best (second) epoch has the given accuracy."""
    out = []
    for f, a in enumerate(accs):
        out += [row(model, size, f, 1, 1.0, 0.5), row(model, size, f, 2, 0.5, a)]
    return out


def welford(values):
    n, mean, m2 = 0, 0.0, 0.0
    for v in values:
        n += 1
        d = v - mean
        mean += d / n
        m2 += d * (v - mean)
    return mean, math.sqrt(m2 / n)


def frame(el, prefix=""):
    g = {k: float(el.get(f"data-{prefix}{k}")) for k in ("x0", "x1", "y0", "y1", "left", "top", "width", "height")}

    def to_data(px, py):
        x = g["x0"] + (px - g["left"]) / g["width"] * (g["x1"] - g["x0"])
        y = g["y1"] - (py - g["top"]) / g["height"] * (g["y1"] - g["y0"])
        return x, y

    return to_data


def points(el):
    return [tuple(map(float, p.split(","))) for p in el.get("points").split()]


class TestSummarize:
    def test_constant_folds(self):
        (s,) = summarize(fold_rows("QNN1", 60, [0.8] * 10))
        assert s["mean_test_acc"] == pytest.approx(0.8) and s["std_test_acc"] == pytest.approx(0.0, abs=1e-15)

    def test_population_std(self):
        (s,) = summarize(fold_rows("CNN1", 60, [0.7, 0.9]), n_folds=2)
        assert s["mean_test_acc"] == pytest.approx(0.8) and s["std_test_acc"] == pytest.approx(0.1)

    def test_full_grid_rows(self):
        rows = []
        for m in ("QNN1", "CNN1", "QNN2", "CNN2"):
            for size in range(60, 241, 20):
                rows += fold_rows(m, size, [0.75] * 10)
        summary = summarize(rows)
        assert len(summary) == 40
        assert [r["model"] for r in summary[::10]] == ["QNN1", "CNN1", "QNN2", "CNN2"]

    def test_missing_folds_warn(self, caplog):
        rows = fold_rows("QNN1", 60, [0.8, 0.6, 0.7])
        rows = [r for r in rows if r["fold"] != 1]
        with caplog.at_level(logging.WARNING):
            (s,) = summarize(rows, n_folds=3)
        assert "missing folds [1]" in caplog.text
        assert s["mean_test_acc"] == pytest.approx(0.75)

    def test_best_epoch_is_first_minimum(self):
        rows = [row("QNN1", 60, 0, 1, 0.5, 0.1), row("QNN1", 60, 0, 2, 0.4, 0.2),
                row("QNN1", 60, 0, 3, 0.4, 0.3), row("QNN1", 60, 0, 4, 0.6, 0.4)]
        assert fold_finals(rows)[("QNN1", 60, 0)]["epoch"] == 2

    @given(st.lists(st.integers(0, 10000), min_size=1, max_size=10))
    @settings(max_examples=50, deadline=None)
    def test_matches_streaming_recomputation(self, ints):
        accs = [i / 10000 for i in ints]
        (s,) = summarize(fold_rows("QNN2", 100, accs), n_folds=len(accs))
        mean, std = welford(accs)
        assert abs(s["mean_test_acc"] - mean) < 1e-12
        assert abs(s["std_test_acc"] - std) < 1e-12


def summary_rows(model, means, stds, sizes=(60, 80, 100)):
    return [{"model": model, "train_size": n, "mean_test_acc": m, "std_test_acc": s}
            for n, m, s in zip(sizes, means, stds)]


class TestLearningCurveSvg:
    def test_well_formed_with_bands_at_mean_pm_std(self):
        summary = summary_rows("QNN1", [0.7, 0.8, 0.85], [0.05, 0.1, 0.02]) + \
            summary_rows("CNN1", [0.6, 0.65, 0.9], [0.0, 0.03, 0.04])
        root = ET.fromstring(plot_learning_curves(summary).encode())
        to_data = frame(root)
        bands = {b.get("data-model"): b for b in root.iter(f"{SVG}polygon") if b.get("class") == "band"}
        means = {p.get("data-model"): p for p in root.iter(f"{SVG}polyline") if p.get("class") == "mean"}
        assert set(bands) == set(means) == {"QNN1", "CNN1"}
        legend = [g.get("data-model") for g in root.iter(f"{SVG}g") if g.get("class") == "legend"]
        assert legend == ["QNN1", "CNN1"]
        for model in ("QNN1", "CNN1"):
            rows = [r for r in summary if r["model"] == model]
            pts = [to_data(*p) for p in points(bands[model])]
            upper, lower = pts[:3], pts[3:][::-1]
            centre = [to_data(*p) for p in points(means[model])]
            for r, (xu, yu), (xl, yl), (_, ym) in zip(rows, upper, lower, centre):
                assert xu == pytest.approx(r["train_size"], abs=1e-2) and xl == pytest.approx(r["train_size"], abs=1e-2)
                assert yu == pytest.approx(r["mean_test_acc"] + r["std_test_acc"], abs=1e-4)
                assert yl == pytest.approx(r["mean_test_acc"] - r["std_test_acc"], abs=1e-4)
                assert ym == pytest.approx(r["mean_test_acc"], abs=1e-4)

    def test_constant_single_model_is_flat(self):
        root = ET.fromstring(plot_learning_curves(summary_rows("QNN2", [0.8] * 3, [0.0] * 3)).encode())
        (line,) = [p for p in root.iter(f"{SVG}polyline") if p.get("class") == "mean"]
        ys = {y for _, y in points(line)}
        assert len(ys) == 1
        (band,) = [p for p in root.iter(f"{SVG}polygon")]
        assert {y for _, y in points(band)} == ys

    def test_orientation(self):
        root = ET.fromstring(plot_learning_curves(summary_rows("QNN1", [0.5, 0.7, 0.9], [0, 0, 0])).encode())
        (line,) = [p for p in root.iter(f"{SVG}polyline") if p.get("class") == "mean"]
        pts = points(line)
        assert all(b[0] > a[0] for a, b in zip(pts, pts[1:]))
        assert all(b[1] < a[1] for a, b in zip(pts, pts[1:]))

    def test_deterministic(self):
        s = summary_rows("QNN1", [0.7, 0.8, 0.85], [0.05, 0.1, 0.02])
        assert plot_learning_curves(s) == plot_learning_curves(s)

    def test_empty(self):
        with pytest.raises(ValueError):
            plot_learning_curves([])


class TestEpochSvg:
    def test_panels(self):
        rows = fold_rows("QNN1", 60, [0.8, 0.9]) + fold_rows("CNN1", 60, [0.7, 0.6])
        root = ET.fromstring(plot_epoch_curves(rows, 60).encode())
        top, bottom = frame(root, "top-"), frame(root, "bottom-")
        acc = {p.get("data-model"): p for p in root.iter(f"{SVG}polyline") if p.get("class") == "acc"}
        loss = {p.get("data-model"): p for p in root.iter(f"{SVG}polyline") if p.get("class") == "loss"}
        assert set(acc) == set(loss) == {"QNN1", "CNN1"}
        e2 = top(*points(acc["QNN1"])[1])
        assert e2 == (pytest.approx(2.0), pytest.approx(0.85, abs=1e-4))
        assert bottom(*points(loss["CNN1"])[0])[1] == pytest.approx(0.5, abs=1e-4)

    def test_missing_size(self):
        with pytest.raises(ValueError):
            plot_epoch_curves(fold_rows("QNN1", 60, [0.8]), 240)


class TestWriteReports:
    def test_files_and_csv_round_trip(self, tmp_path):
        rows = []
        for m in ("QNN1", "CNN1", "QNN2", "CNN2"):
            for size in (60, 240):
                rows += fold_rows(m, size, [0.7, 0.9])
        write_metrics_csv(tmp_path / "metrics.csv", rows)
        back = read_metrics_csv(tmp_path / "metrics.csv")
        assert back == rows
        written = write_reports(back, tmp_path, n_folds=2)
        assert sorted(p.name for p in written) == [
            "fig_epochs_240.svg", "fig_epochs_60.svg", "fig_learning_curve_s1.svg",
            "fig_learning_curve_s2.svg", "summary.csv"]
        lines = (tmp_path / "summary.csv").read_text().splitlines()
        assert lines[0] == "model,train_size,mean_test_acc,std_test_acc"
        assert lines[1] == "QNN1,60,0.800000,0.100000"
        for p in written[1:]:
            ET.parse(p)

    def test_bad_header(self, tmp_path):
        (tmp_path / "m.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_metrics_csv(tmp_path / "m.csv")
