"""
Training a single grid cell
===========================

Build a small synthetic corpus, precompute the quanvolutional maps once, and
train QNN1 and CNN1 on the same fold. The settings are cut down so the script
finishes in a minute or two.
"""
import tempfile

from quanvo.config import parse_config
from quanvo.pipeline import prepare_data
from quanvo.train import fit_fold

SETTINGS = """
[data]
synthetic_dysphonia = 84
synthetic_healthy = 36
n_test = 20
[train]
max_epochs = 200
folds = 5
[experiment]
sizes = 60
"""

with tempfile.TemporaryDirectory() as workdir:
    cfg = parse_config(SETTINGS, base_dir=workdir, env={})
    data = prepare_data(cfg)
    print("pool", data.pool_raw.shape, "quanv pool", data.pool_quanv.shape, "test", data.test_raw.shape)

    for name in ("QNN1", "CNN1"):
        model, res = fit_fold(data, name, size=60, fold=0, cfg=cfg.train)
        best = res.history[res.best_epoch - 1]
        params = sum(p.size for p in model.get_weights())
        print(f"{name}: {params} weights, stopped at epoch {res.stop_epoch}, best {res.best_epoch}, "
              f"monitor loss {best.monitor_loss:.4f}, test acc {best.test_acc:.3f}")
