"""Architectures for the two scenarios and a small sequential container."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .layers import Activation, Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, cross_entropy

MODEL_NAMES = ("QNN1", "CNN1", "QNN2", "CNN2")
RAW_INPUT = (40, 100, 1)
QUANV_INPUT = (20, 50, 4)
WEIGHTS_MAGIC = b"QVWTS1"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int | None = None
    kernel: int | None = None
    padding: str | None = None
    units: int | None = None
    rate: float | None = None
    activation: str | None = None

    def __post_init__(self):
        kinds = ("Conv2D", "MaxPool2D", "Flatten", "Dense", "Dropout", "Activation")
        if self.kind not in kinds:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.padding is not None and self.kind != "Conv2D":
            raise ValueError("padding applies only to Conv2D")
        if self.kind == "Conv2D" and (not self.filters or not self.kernel or self.padding not in ("valid", "same")):
            raise ValueError(f"invalid Conv2D parameters: {self}")
        if self.kind == "Dense" and not self.units:
            raise ValueError("Dense needs units")
        if self.kind == "Activation" and self.activation not in ("relu", "tanh", "softmax"):
            raise ValueError(f"invalid activation {self.activation!r}")


def conv(filters, padding):
    return LayerSpec("Conv2D", filters=filters, kernel=2, padding=padding)


def act(fn):
    return LayerSpec("Activation", activation=fn)


POOL = LayerSpec("MaxPool2D", kernel=2)
HEAD = (
    LayerSpec("Flatten"),
    LayerSpec("Dense", units=64), act("tanh"),
    LayerSpec("Dropout", rate=0.5),
    LayerSpec("Dense", units=2), act("softmax"),
)


@dataclass(frozen=True)
class ModelSpec:
    """``quanv=True`` models take the precomputed 20x50x4 quanvolutional map as input."""

    name: str
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]
    quanv: bool = False

    def build(self, seed: int = 0) -> Sequential:
        return Sequential.from_spec(self, seed)

    def shapes(self) -> list[tuple]:
        """Activation shape after each layer, starting with the input."""
        return self.build(0).shapes()


def build_model(name: str) -> ModelSpec:
    name = name.upper()
    if name not in MODEL_NAMES:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
    layers: list[LayerSpec] = []
    if name.startswith("CNN"):
        layers += [conv(4, "valid"), act("relu")]
    layers.append(POOL)
    if name.endswith("2"):
        layers += [conv(16, "same"), act("relu"), POOL]
    layers += HEAD
    quanv = name.startswith("QNN")
    return ModelSpec(name, tuple(layers), QUANV_INPUT if quanv else RAW_INPUT, quanv)


class Sequential:
    def __init__(self, layers: list[Layer], input_shape: tuple, name: str = "model"):
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.name = name

    @classmethod
    def from_spec(cls, spec: ModelSpec, seed: int = 0) -> Sequential:
        init_seq, drop_seq = np.random.SeedSequence(seed).spawn(2)
        init_rng = np.random.default_rng(init_seq)
        drop_rng = np.random.default_rng(drop_seq)
        layers: list[Layer] = []
        shape = spec.input_shape
        for ls in spec.layers:
            if ls.kind == "Conv2D":
                layer = Conv2D(shape[-1], ls.filters, ls.kernel, ls.padding, init_rng)
            elif ls.kind == "MaxPool2D":
                layer = MaxPool2D(ls.kernel or 2)
            elif ls.kind == "Flatten":
                layer = Flatten()
            elif ls.kind == "Dense":
                layer = Dense(shape[-1], ls.units, init_rng)
            elif ls.kind == "Dropout":
                layer = Dropout(ls.rate, drop_rng)
            else:
                layer = Activation(ls.activation)
            shape = layer.output_shape(shape)
            layers.append(layer)
        layers[0].input_grad = False
        return cls(layers, spec.input_shape, spec.name)

    def shapes(self) -> list[tuple]:
        out = [self.input_shape]
        for layer in self.layers:
            out.append(layer.output_shape(out[-1]))
        return out

    @property
    def _ends_in_softmax(self) -> bool:
        last = self.layers[-1]
        return isinstance(last, Activation) and last.fn == "softmax"

    def logits(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        body = self.layers[:-1] if self._ends_in_softmax else self.layers
        for layer in body:
            x = layer.forward(x, training)
        return x

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = self.logits(x, training=False)
        return self.layers[-1].forward(x) if self._ends_in_softmax else x

    def backward_logits(self, grad: np.ndarray) -> np.ndarray:
        body = self.layers[:-1] if self._ends_in_softmax else self.layers
        for layer in reversed(body):
            grad = layer.backward(grad)
        return grad

    def loss_and_grads(self, x, y, training=True) -> tuple[float, np.ndarray]:
        """Fused softmax cross-entropy; fills every layer's ``grads``. Returns ``(loss, logits)``."""
        z = self.logits(x, training)
        loss, gz = cross_entropy(z, y)
        self.backward_logits(gz)
        return loss, z

    def parameters(self) -> list[tuple[Layer, str]]:
        return [(layer, k) for layer in self.layers for k in sorted(layer.params)]

    def get_weights(self) -> list[np.ndarray]:
        return [layer.params[k].copy() for layer, k in self.parameters()]

    def set_weights(self, weights: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(params) != len(weights):
            raise ValueError(f"expected {len(params)} weight arrays, got {len(weights)}")
        for (layer, k), w in zip(params, weights):
            if layer.params[k].shape != w.shape:
                raise ValueError(f"weight shape {w.shape} does not match {layer.params[k].shape}")
            layer.params[k] = np.array(w, dtype=np.float64)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update ``params`` in place."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged("non-finite gradient")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params, grads, state: Adam | None = None, **hyper) -> Adam:
    """Functional wrapper: apply one Adam update and return the optimizer state."""
    state = state or Adam(**hyper)
    state.step(params, grads)
    return state


def save_weights(path, model: Sequential) -> None:
    name = model.name.encode()
    parts = [WEIGHTS_MAGIC, struct.pack("<I", len(name)), name]
    weights = model.get_weights()
    parts.append(struct.pack("<I", len(weights)))
    for w in weights:
        parts.append(struct.pack("<I", w.ndim) + struct.pack(f"<{w.ndim}I", *w.shape))
        parts.append(w.astype("<f8").tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


def load_weights(path) -> tuple[str, list[np.ndarray]]:
    buf = Path(path).read_bytes()
    if buf[:6] != WEIGHTS_MAGIC:
        raise ValueError(f"{path} is not a QVWTS1 checkpoint")
    off = 6
    (nlen,) = struct.unpack_from("<I", buf, off)
    name = buf[off + 4:off + 4 + nlen].decode()
    off += 4 + nlen
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    weights = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", buf, off)
        shape = struct.unpack_from(f"<{ndim}I", buf, off + 4)
        off += 4 + 4 * ndim
        size = int(np.prod(shape)) * 8
        weights.append(np.frombuffer(buf[off:off + size], dtype="<f8").reshape(shape).astype(np.float64))
        off += size
    return name, weights
