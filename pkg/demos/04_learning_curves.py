"""
Learning curves for all four models
===================================

Run a reduced experiment grid (3 folds, 3 sizes) and write the same CSV and
SVG artifacts as the full run. Pass an output directory as the first argument
to keep them; the default is ./demo_results.
"""
import sys
from pathlib import Path

from quanvo.config import parse_config
from quanvo.pipeline import run

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_results").resolve()
cfg = parse_config(f"""
[data]
synthetic_dysphonia = 140
synthetic_healthy = 60
n_test = 40
[train]
max_epochs = 300
folds = 3
[experiment]
sizes = 60,100,140
out_dir = {out}
""", env={})


def progress(r):
    print(f"{r.model} n={r.train_size} fold={r.fold}: best epoch {r.best_epoch}, test acc {r.test_acc:.3f}")


for path in run(cfg, progress):
    print("wrote", path)
print((out / "summary.csv").read_text())
