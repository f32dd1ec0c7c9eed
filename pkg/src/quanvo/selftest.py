"""Gradient checks and the quick oracle/invariant suite behind ``quanvo selftest``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import oracles
from .dsp import AudioClip, DspConfig, MelParams, clip_to_image, mel_center_frequencies, mel_spectrogram
from .nn import Activation, Conv2D, Dense, Dropout, Flatten, MaxPool2D, build_model, cross_entropy
from .qsim import QuantumState, expectation_z, random_circuit, run_circuit
from .quanv import QuanvFilter, quanv_patches
from .train import EarlyStopping

GRAD_TOL = 1e-6
LAYER_KINDS = ("conv_valid", "conv_same", "maxpool", "flatten", "dense", "dropout",
               "relu", "tanh", "softmax", "cross_entropy")


@dataclass(frozen=True)
class GradCheck:
    kind: str
    instance: int
    error: float

    @property
    def passed(self) -> bool:
        return self.error < GRAD_TOL


def _away_from_zero(rng, shape, lo=0.1):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(lo, 1.0, size=shape)


def _layer_case(kind: str, rng: np.random.Generator):
    """(layer, input) for one random instance; inputs avoid kinks and ties."""
    n = int(rng.integers(1, 4))
    if kind.startswith("conv"):
        h, w, cin, cout = (int(v) for v in rng.integers(2, 6, size=4))
        layer = Conv2D(cin, cout, 2, kind.split("_")[1], rng)
        layer.params["b"] = rng.normal(size=cout)
        return layer, rng.normal(size=(n, h, w, cin))
    if kind == "maxpool":
        h, w, c = (int(v) for v in rng.integers(2, 7, size=3))
        size = n * h * w * c
        # well-separated distinct values so a 1e-5 nudge never changes a window's argmax
        return MaxPool2D(2), rng.permutation(np.arange(size) * 0.01 - size * 0.005).reshape(n, h, w, c)
    if kind == "flatten":
        return Flatten(), rng.normal(size=(n, 3, 4, 2))
    if kind == "dense":
        fan_in, units = (int(v) for v in rng.integers(2, 12, size=2))
        layer = Dense(fan_in, units, rng)
        layer.params["b"] = rng.normal(size=units)
        return layer, rng.normal(size=(n, fan_in))
    if kind == "dropout":
        return Dropout(0.5, rng), rng.normal(size=(n, 10))
    if kind in ("relu", "tanh", "softmax"):
        return Activation(kind), _away_from_zero(rng, (n, 7))
    raise ValueError(f"unknown layer kind {kind!r}")


def check_layer(kind: str, seed: int = 0, eps: float = 1e-5) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Every trainable array and the layer input are checked against the scalar
    ``sum(forward(x) * g)`` for a random upstream gradient ``g``.
    """
    rng = np.random.default_rng(seed)
    if kind == "cross_entropy":
        z = rng.normal(size=(int(rng.integers(1, 6)), 2))
        y = rng.integers(0, 2, size=z.shape[0])
        _, gz = cross_entropy(z, y)
        return oracles.relative_error(gz, oracles.numerical_gradient(lambda: cross_entropy(z, y)[0], z, eps))

    layer, x = _layer_case(kind, rng)
    training = kind == "dropout"
    mask_seed = int(rng.integers(2**31))

    def forward():
        if training:
            layer.rng = np.random.default_rng(mask_seed)
        return layer.forward(x, training)

    g = rng.normal(size=forward().shape)
    gx = layer.backward(g)

    def f():
        return float(np.sum(forward() * g))

    errors = [oracles.relative_error(gx, oracles.numerical_gradient(f, x, eps))]
    analytic = {k: v.copy() for k, v in layer.grads.items()}
    for name, p in layer.params.items():
        errors.append(oracles.relative_error(analytic[name], oracles.numerical_gradient(f, p, eps)))
    return max(errors)


def gradcheck(kinds=LAYER_KINDS, instances: int = 5, seed: int = 0) -> list[GradCheck]:
    return [GradCheck(k, i, check_layer(k, seed * 1000 + i)) for k in kinds for i in range(instances)]


# -- quick suite ------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _oracle_and_norm(n_circuits=100, max_depth=30):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst_amp = worst_norm = 0.0
    bounded = True
    for i in range(n_circuits):
        circ = random_circuit(4, int(rng.integers(0, max_depth + 1)), seed=i)
        psi0 = oracles.product_state(rng.uniform(0, math.pi, 4))
        out = run_circuit(QuantumState(4, psi0), circ)
        ref = oracles.dense_unitary(circ.gates, 4) @ psi0
        worst_amp = max(worst_amp, float(np.max(np.abs(out.amplitudes - ref))))
        worst_norm = max(worst_norm, abs(out.norm - 1.0))
        bounded &= all(-1.0 <= expectation_z(out, q) <= 1.0 for q in range(4))
    elapsed = time.perf_counter() - start
    return [
        Check("qsim oracle equivalence", worst_amp < 1e-10 and elapsed < 5.0,
              f"max |dpsi| = {worst_amp:.2e} over {n_circuits} circuits in {elapsed:.2f} s"),
        Check("qsim norm and <Z> bounds", worst_norm < 1e-10 and bounded, f"max |norm - 1| = {worst_norm:.2e}"),
    ]


def _quanv_identity(n=1000):
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, size=(n, 4))
    got = quanv_patches(x, QuanvFilter(random_circuit(4, 0, 0)))
    err = float(np.max(np.abs(got - np.cos(np.pi * x))))
    return Check("quanv empty-circuit identity", err < 1e-12, f"max error {err:.2e} over {n} patches")


def _grads():
    results = gradcheck()
    worst = max(results, key=lambda r: r.error)
    return Check("layer gradients", all(r.passed for r in results),
                 f"worst {worst.kind} #{worst.instance}: {worst.error:.2e}")


def _shapes():
    expected = {
        "CNN1": [(40, 100, 1), (39, 99, 4), (19, 49, 4), (3724,), (64,), (2,)],
        "QNN1": [(20, 50, 4), (10, 25, 4), (1000,), (64,), (2,)],
        "QNN2": [(20, 50, 4), (10, 25, 4), (10, 25, 16), (5, 12, 16), (960,), (64,), (2,)],
        "CNN2": [(40, 100, 1), (39, 99, 4), (19, 49, 4), (19, 49, 16), (9, 24, 16), (3456,), (64,), (2,)],
    }
    bad = [name for name, chain in expected.items() if shape_chain(name) != chain]
    return Check("model shape chains", not bad, "mismatch: " + ", ".join(bad) if bad else "all four models")


def shape_chain(name: str) -> list[tuple]:
    """Distinct activation shapes through a model (shape-preserving layers collapsed)."""
    chain = []
    for s in build_model(name).shapes():
        if not chain or s != chain[-1]:
            chain.append(s)
    return chain


def _mel():
    sr = 44100
    t = np.arange(int(2.0 * sr)) / sr
    clip = AudioClip(0.5 * np.sin(2 * np.pi * 440.0 * t), sr)
    spec = mel_spectrogram(clip)
    nearest = int(np.argmin(np.abs(mel_center_frequencies(sr, MelParams()) - 440.0)))
    a, b = clip_to_image(clip, DspConfig()), clip_to_image(clip, DspConfig())
    # image row whose area-average span holds the centre of the peak band
    row = int((nearest + 0.5) * a.shape[0] / spec.shape[0])
    peak_ok = bool(np.all(spec.argmax(axis=0) == nearest)) and bool(np.all(a[:, :, 0].argmax(axis=0) == row))
    same = a.tobytes() == b.tobytes() and a.shape == (40, 100, 1)
    return Check("mel pipeline 440 Hz", peak_ok and same, f"peak band {nearest}, image row {row}, shape {a.shape}")


def _early_stopping():
    es = EarlyStopping(15)
    losses = [1.0 / e for e in range(1, 21)]
    losses += [losses[-1]] * 100
    stop = next(e for e, loss in enumerate(losses, start=1) if es.update(loss))
    return Check("early stopping", stop == 35 and es.best_epoch == 20, f"stop {stop}, best {es.best_epoch}")


def run_selftest() -> list[Check]:
    return [*_oracle_and_norm(), _quanv_identity(), _grads(), _shapes(), _mel(), _early_stopping()]
