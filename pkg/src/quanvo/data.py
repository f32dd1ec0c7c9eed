"""Manifests, stratified sampling, fold assignment and the synthetic vowel generator.

Label encoding: ``healthy -> 0``, ``dysphonia -> 1``.
"""
from __future__ import annotations

import csv
import math
from fractions import Fraction
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import AudioClip

LABELS = ("healthy", "dysphonia")
HEALTHY, DYSPHONIA = 0, 1
DYSPHONIA_RATIO = 0.7
GRID_SIZES = (60, 80, 100, 120, 140, 160, 180, 200, 220, 240)

AUDIO_HEADER = ("path", "label", "offset_s", "duration_s")
SYNTH_HEADER = ("synth", "label", "f0", "jitter", "shimmer", "hnr", "seed")

# jitter %, shimmer %, HNR dB; engineering choices within clinical norm ranges
PRESETS = {
    "healthy": {"jitter": 0.3, "shimmer": 2.0, "hnr": 25.0},
    "dysphonia": {"jitter": 2.5, "shimmer": 8.0, "hnr": 8.0},
}
N_HARMONICS = 10


class DataError(ValueError):
    pass


def label_index(label: str) -> int:
    try:
        return LABELS.index(label.strip().lower())
    except ValueError:
        raise DataError(f"label must be one of {LABELS}, got {label!r}") from None


@dataclass(frozen=True)
class AudioEntry:
    path: str
    label: str
    offset_s: float = 0.0
    duration_s: float | None = None

    @property
    def key(self) -> str:
        return self.path


@dataclass(frozen=True)
class SynthEntry:
    synth: str
    label: str
    f0: float
    jitter: float
    shimmer: float
    hnr: float
    seed: int

    @property
    def key(self) -> str:
        return self.synth


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)

    def __post_init__(self):
        keys = [e.key for e in self.entries]
        if len(set(keys)) != len(keys):
            dup = sorted({k for k in keys if keys.count(k) > 1})
            raise DataError(f"duplicate manifest entries: {dup[:5]}")
        for e in self.entries:
            label_index(e.label)

    def __len__(self):
        return len(self.entries)

    @property
    def labels(self) -> np.ndarray:
        return np.array([label_index(e.label) for e in self.entries], dtype=np.int64)

    @property
    def counts(self) -> dict[str, int]:
        lab = self.labels
        return {name: int((lab == i).sum()) for i, name in enumerate(LABELS)}

    @property
    def is_synthetic(self) -> bool:
        return bool(self.entries) and isinstance(self.entries[0], SynthEntry)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_manifest(path, manifest: DatasetManifest) -> None:
    header = SYNTH_HEADER if manifest.is_synthetic else AUDIO_HEADER
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for e in manifest.entries:
            w.writerow([_fmt(getattr(e, h)) for h in header])


def read_manifest(path) -> DatasetManifest:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
        fields = tuple(rows[0].keys()) if rows else ()
    if not rows:
        raise DataError(f"{path}: manifest is empty")
    if fields[: len(SYNTH_HEADER)] == SYNTH_HEADER:
        entries = [
            SynthEntry(r["synth"], r["label"], float(r["f0"]), float(r["jitter"]),
                       float(r["shimmer"]), float(r["hnr"]), int(r["seed"]))
            for r in rows
        ]
    elif fields[: len(AUDIO_HEADER)] == AUDIO_HEADER:
        entries = [
            AudioEntry(r["path"], r["label"], float(r["offset_s"] or 0.0),
                       float(r["duration_s"]) if r["duration_s"] else None)
            for r in rows
        ]
    else:
        raise DataError(f"{path}: header must be {','.join(AUDIO_HEADER)} or {','.join(SYNTH_HEADER)}")
    return DatasetManifest(entries)


# -- synthetic vowels -------------------------------------------------------

def synth_vowel(
    f0: float,
    duration: float = 2.0,
    jitter: float = 0.0,
    shimmer: float = 0.0,
    hnr: float = math.inf,
    seed: int = 0,
    sample_rate: int = 44100,
) -> AudioClip:
    """Sustained vowel-like tone.

    ``jitter`` and ``shimmer`` are per-cycle relative standard deviations of the
    period and amplitude, in percent. ``hnr`` is the harmonics-to-noise power
    ratio in dB (``inf`` for no noise).
    """
    if not 80 <= f0 <= 400:
        raise ValueError(f"f0 must be in [80, 400] Hz, got {f0}")
    if duration <= 0 or jitter < 0 or shimmer < 0 or math.isnan(hnr):
        raise ValueError("duration must be positive and jitter/shimmer non-negative")
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    n_cycles = int(math.ceil(duration * f0 * 1.6)) + 2
    if jitter > 0:
        periods = np.clip(1 + jitter / 100 * rng.standard_normal(n_cycles), 0.5, 1.5) / f0
        boundaries = np.concatenate([[0.0], np.cumsum(periods)])
        cycles = np.interp(t, boundaries, np.arange(n_cycles + 1))
    else:
        boundaries = np.arange(n_cycles + 1) / f0
        cycles = t * f0
    if shimmer > 0:
        amps = np.clip(1 + shimmer / 100 * rng.standard_normal(n_cycles + 1), 0.1, None)
        envelope = np.interp(t, boundaries, amps)
    else:
        envelope = np.ones(n)

    h = np.arange(1, N_HARMONICS + 1)
    source = np.sin(2 * np.pi * cycles[:, None] * h) @ (1.0 / h)
    x = envelope * source / np.sum(1.0 / h)
    if math.isfinite(hnr):
        noise_power = np.mean(x * x) / 10 ** (hnr / 10)
        x = x + rng.normal(0.0, math.sqrt(noise_power), n)
    return AudioClip(x, sample_rate)


def severity_params(severity: float) -> dict[str, float]:
    """Voice parameters on a line through the presets (0 = healthy, 1 = dysphonic).

    Jitter and shimmer interpolate geometrically, HNR linearly.
    """
    h, d = PRESETS["healthy"], PRESETS["dysphonia"]
    return {
        "jitter": h["jitter"] * (d["jitter"] / h["jitter"]) ** severity,
        "shimmer": h["shimmer"] * (d["shimmer"] / h["shimmer"]) ** severity,
        "hnr": h["hnr"] + (d["hnr"] - h["hnr"]) * severity,
    }


def synthetic_manifest(n_dysphonia: int = 216, n_healthy: int = 88, seed: int = 0,
                       severity_sd: float = 0.25) -> DatasetManifest:
    """Synthetic stand-in for the vowel corpus.

    Each clip gets a severity drawn from N(0, sd) for healthy and N(1, sd) for
    dysphonic voices, clipped to [-0.5, 1.5] and mapped through
    :func:`severity_params`, so the classes overlap a little near 0.5.
    f0 is drawn from 90-260 Hz for both classes.
    """
    rng = np.random.default_rng(seed)
    entries = []
    for label, count, centre in (("dysphonia", n_dysphonia, 1.0), ("healthy", n_healthy, 0.0)):
        for i in range(count):
            sev = float(np.clip(rng.normal(centre, severity_sd), -0.5, 1.5))
            p = severity_params(sev)
            entries.append(SynthEntry(
                f"{label}_{i:03d}", label,
                round(float(rng.uniform(90.0, 260.0)), 3),
                round(p["jitter"], 4),
                round(p["shimmer"], 4),
                round(p["hnr"], 3),
                int(rng.integers(0, 2**31 - 1)),
            ))
    return DatasetManifest(entries)


def load_clip(entry, base_dir=".", duration: float = 2.0, sample_rate: int = 44100) -> AudioClip:
    from .dsp import read_wav

    if isinstance(entry, SynthEntry):
        return synth_vowel(entry.f0, duration, entry.jitter, entry.shimmer, entry.hnr, entry.seed, sample_rate)
    path = Path(entry.path)
    if not path.is_absolute():
        path = Path(base_dir) / path
    return read_wav(path, entry.offset_s, entry.duration_s)


# -- splits -----------------------------------------------------------------

def _class_counts(n: int, ratio: float = DYSPHONIA_RATIO) -> tuple[int, int]:
    """(dysphonia, healthy) counts for a draw of ``n`` with round-half-up."""
    # exact rational arithmetic: 0.7 * 85 is 59.4999... in binary floating point
    d = math.floor(Fraction(str(ratio)) * n + Fraction(1, 2))
    return d, n - d


@dataclass(frozen=True)
class SplitPlan:
    train: np.ndarray
    test: np.ndarray
    seed: int
    max_train_size: int
    ratio: float = DYSPHONIA_RATIO


def train_test_split(labels, n_test: int = 61, max_train_size: int = 240,
                     ratio: float = DYSPHONIA_RATIO, seed: int = 0) -> SplitPlan:
    """Hold out ``n_test`` samples, class-proportional where possible.

    The proportional test share of a class is reduced when the remaining pool
    would be too small to serve a ``max_train_size`` draw at ``ratio``; the
    shortfall is taken from the other class.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if not 0 < n_test < n:
        raise DataError(f"n_test must be in (0, {n}), got {n_test}")
    need = dict(zip((DYSPHONIA, HEALTHY), _class_counts(max_train_size, ratio)))
    have = {c: int((labels == c).sum()) for c in (HEALTHY, DYSPHONIA)}
    test_h = min(int(round(n_test * have[HEALTHY] / n)), have[HEALTHY] - need[HEALTHY])
    test_h = max(test_h, 0)
    test_d = n_test - test_h
    if have[DYSPHONIA] - test_d < need[DYSPHONIA] or test_h > have[HEALTHY]:
        raise DataError(
            f"cannot hold out {n_test} test samples and still draw {max_train_size} "
            f"training samples at ratio {ratio} from class counts {have}"
        )
    rng = np.random.default_rng(seed)
    test = []
    for c, k in ((DYSPHONIA, test_d), (HEALTHY, test_h)):
        members = np.flatnonzero(labels == c)
        test.append(rng.choice(members, size=k, replace=False))
    test = np.sort(np.concatenate(test))
    train = np.setdiff1d(np.arange(n), test)
    return SplitPlan(train, test, seed, max_train_size, ratio)


def stratified_subsample(pool_labels, n: int, ratio: float = DYSPHONIA_RATIO, seed: int = 0) -> np.ndarray:
    """Positions into ``pool_labels``: ``round(ratio*n)`` dysphonia plus the rest healthy."""
    pool_labels = np.asarray(pool_labels)
    rng = np.random.default_rng(seed)
    picked = []
    for c, k in zip((DYSPHONIA, HEALTHY), _class_counts(n, ratio)):
        members = np.flatnonzero(pool_labels == c)
        if len(members) < k:
            raise DataError(f"need {k} '{LABELS[c]}' samples but the pool has {len(members)}")
        picked.append(rng.choice(members, size=k, replace=False))
    return np.sort(np.concatenate(picked))


def kfold_split(indices, labels, k: int = 10, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold over ``indices`` (with matching ``labels``).

    Members of each class are shuffled and dealt round-robin, continuing the
    fold counter across classes, so fold sizes differ by at most one and each
    fold's class counts differ from any other's by at most one.
    """
    indices = np.asarray(indices)
    labels = np.asarray(labels)
    if k < 2 or k > len(indices):
        raise ValueError(f"k must be in [2, {len(indices)}], got {k}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(indices), dtype=np.int64)
    pos = 0
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        fold_of[members] = (pos + np.arange(len(members))) % k
        pos += len(members)
    return [(indices[fold_of != f], indices[fold_of == f]) for f in range(k)]
