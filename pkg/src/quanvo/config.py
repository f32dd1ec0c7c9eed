"""Experiment configuration.

Grammar: an INI file (``[section]`` headers, ``key = value`` lines, ``#`` or
``;`` comments). Every key is optional; omitted keys take the defaults below.
An environment variable ``QUANVO_<SECTION>__<KEY>`` (upper case, double
underscore) overrides the file, e.g. ``QUANVO_TRAIN__MAX_EPOCHS=50``.

    [data]
    manifest =            # CSV manifest; empty -> generated synthetic corpus
    synthetic_dysphonia = 216
    synthetic_healthy = 88
    synthetic_severity_sd = 0.25
    n_test = 61
    seed = 0

    [dsp]
    sample_rate = 44100   # synthetic clips only; WAV files keep their own rate
    duration_s = 2.0
    window_size = 2048
    hop_length = 512
    n_fft = 2048
    window = hann         # hann | hamming
    n_mels = 128
    f_min = 0.0
    f_max =               # empty -> Nyquist
    height = 40
    width = 100

    [quanv]
    seed = 42
    n_gates = 8
    stride = 2

    [train]
    max_epochs = 3000
    patience = 15
    batch_size = 32
    lr = 0.001
    folds = 10
    seed = 0

    [experiment]
    models = qnn1,cnn1,qnn2,cnn2
    sizes = 60,80,100,120,140,160,180,200,220,240
    workers = 0           # 0 -> all available cores
    out_dir = results
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .data import GRID_SIZES
from .dsp import DspConfig, MelParams, StftParams
from .nn import MODEL_NAMES
from .train import TrainConfig

ENV_PREFIX = "QUANVO_"

DEFAULTS: dict[str, dict[str, str]] = {
    "data": {"manifest": "", "synthetic_dysphonia": "216", "synthetic_healthy": "88",
             "synthetic_severity_sd": "0.25", "n_test": "61", "seed": "0"},
    "dsp": {"sample_rate": "44100", "duration_s": "2.0", "window_size": "2048", "hop_length": "512",
            "n_fft": "2048", "window": "hann", "n_mels": "128", "f_min": "0.0", "f_max": "",
            "height": "40", "width": "100"},
    "quanv": {"seed": "42", "n_gates": "8", "stride": "2"},
    "train": {"max_epochs": "3000", "patience": "15", "batch_size": "32", "lr": "0.001",
              "folds": "10", "seed": "0"},
    "experiment": {"models": ",".join(m.lower() for m in MODEL_NAMES),
                   "sizes": ",".join(map(str, GRID_SIZES)), "workers": "0", "out_dir": "results"},
}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class DataSection:
    manifest: str = ""
    synthetic_dysphonia: int = 216
    synthetic_healthy: int = 88
    synthetic_severity_sd: float = 0.25
    n_test: int = 61
    seed: int = 0


@dataclass(frozen=True)
class QuanvSection:
    seed: int = 42
    n_gates: int = 8
    stride: int = 2


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSection = DataSection()
    dsp: DspConfig = DspConfig()
    sample_rate: int = 44100
    quanv: QuanvSection = QuanvSection()
    train: TrainConfig = TrainConfig()
    models: tuple[str, ...] = MODEL_NAMES
    sizes: tuple[int, ...] = GRID_SIZES
    workers: int = 0
    out_dir: str = "results"
    base_dir: str = "."
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def out_path(self) -> Path:
        p = Path(self.out_dir)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def manifest_path(self) -> Path | None:
        if not self.data.manifest:
            return None
        p = Path(self.data.manifest)
        return p if p.is_absolute() else Path(self.base_dir) / p


def _merged(parser: configparser.ConfigParser | None, env) -> tuple[dict, list[str]]:
    problems = []
    values = {s: dict(kv) for s, kv in DEFAULTS.items()}
    if parser is not None:
        for section in parser.sections():
            if section not in DEFAULTS:
                problems.append(f"unknown section [{section}]")
                continue
            for key, val in parser.items(section):
                if key not in DEFAULTS[section]:
                    problems.append(f"unknown key [{section}] {key}")
                else:
                    values[section][key] = val.strip()
    for name, val in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        section, sep, key = name[len(ENV_PREFIX):].lower().partition("__")
        if not sep or section not in DEFAULTS or key not in DEFAULTS[section]:
            problems.append(f"unknown override {name}")
        else:
            values[section][key] = val.strip()
    return values, problems


def parse_config(text: str = "", base_dir=".", env=None) -> ExperimentConfig:
    """Build a config from INI ``text`` plus environment overrides; lists every problem at once."""
    env = os.environ if env is None else env
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"unparseable config: {exc}"]) from None
    v, problems = _merged(parser, env)

    def get(section, key, conv):
        raw = v[section][key]
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            problems.append(f"[{section}] {key} = {raw!r}: {exc}")
            return conv(DEFAULTS[section][key]) if DEFAULTS[section][key] else None

    def int_list(s):
        return tuple(int(x) for x in s.split(",") if x.strip())

    def model_list(s):
        names = tuple(x.strip().upper() for x in s.split(",") if x.strip())
        bad = [n for n in names if n not in MODEL_NAMES]
        if bad or not names:
            raise ValueError(f"models must be a non-empty subset of {', '.join(MODEL_NAMES)}")
        return names

    def window(s):
        s = s.lower()
        if s not in ("hann", "hamming"):
            raise ValueError("must be hann or hamming")
        return s

    def opt_float(s):
        return float(s) if s else None

    data = DataSection(
        get("data", "manifest", str), get("data", "synthetic_dysphonia", int),
        get("data", "synthetic_healthy", int), get("data", "synthetic_severity_sd", float),
        get("data", "n_test", int), get("data", "seed", int),
    )
    sections = {}
    for name, build in (
        ("stft", lambda: StftParams(get("dsp", "window_size", int), get("dsp", "hop_length", int),
                                    get("dsp", "n_fft", int), get("dsp", "window", window))),
        ("mel", lambda: MelParams(get("dsp", "n_mels", int), get("dsp", "f_min", float),
                                  get("dsp", "f_max", opt_float))),
        ("train", lambda: TrainConfig(max_epochs=get("train", "max_epochs", int),
                                      patience=get("train", "patience", int),
                                      batch_size=get("train", "batch_size", int),
                                      lr=get("train", "lr", float), folds=get("train", "folds", int),
                                      seed=get("train", "seed", int))),
    ):
        try:
            sections[name] = build()
        except (TypeError, ValueError) as exc:
            problems.append(f"[{'dsp' if name in ('stft', 'mel') else name}] {exc}")
    quanv = QuanvSection(get("quanv", "seed", int), get("quanv", "n_gates", int), get("quanv", "stride", int))
    models = get("experiment", "models", model_list)
    sizes = get("experiment", "sizes", int_list)
    workers = get("experiment", "workers", int)
    sample_rate = get("dsp", "sample_rate", int)

    if sizes is not None and (not sizes or min(sizes) < 2):
        problems.append("[experiment] sizes must be a non-empty list of integers >= 2")
    if quanv.n_gates is not None and quanv.n_gates < 0:
        problems.append("[quanv] n_gates must be >= 0")
    if quanv.stride is not None and quanv.stride < 1:
        problems.append("[quanv] stride must be >= 1")
    if workers is not None and workers < 0:
        problems.append("[experiment] workers must be >= 0")
    if problems:
        raise ConfigError(problems)
    dsp = DspConfig(sections["stft"], sections["mel"], get("dsp", "duration_s", float),
                    get("dsp", "height", int), get("dsp", "width", int))
    return ExperimentConfig(data, dsp, sample_rate, quanv, sections["train"], models, sizes, workers,
                            v["experiment"]["out_dir"], str(base_dir), v)


def load_config(path=None, env=None) -> ExperimentConfig:
    if path is None:
        return parse_config("", ".", env)
    path = Path(path)
    return parse_config(path.read_text(), path.parent, env)


def dump_config(cfg: ExperimentConfig) -> str:
    """Fully resolved INI text (every key), as used for a run."""
    lines = []
    for section, kv in cfg.raw.items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {val}" for k, val in kv.items()]
        lines.append("")
    return "\n".join(lines)
