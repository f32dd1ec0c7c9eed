"""Layers with explicit forward/backward passes on NHWC float64 batches.

Each layer caches what its backward pass needs during ``forward``; call
``backward`` with the upstream gradient right after the matching ``forward``.
Trainable arrays live in ``layer.params`` and their gradients in
``layer.grads`` under the same keys.
"""
from __future__ import annotations

import numpy as np


class Layer:
    params: dict
    grads: dict
    # a model's first layer may skip computing the gradient w.r.t. its input
    input_grad: bool = True

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: tuple) -> tuple:
        return input_shape


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def same_padding(k: int) -> tuple[int, int]:
    """(before, after) zero padding that keeps the size for kernel ``k``."""
    before = (k - 1) // 2
    return before, k - 1 - before


def _pad_input(x, kh, kw, padding):
    if padding == "same":
        (t, b), (l, r) = same_padding(kh), same_padding(kw)
        return np.pad(x, ((0, 0), (t, b), (l, r), (0, 0))), (t, l)
    if padding != "valid":
        raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")
    return x, (0, 0)


def _im2col(xp, kh, kw, oh, ow):
    """``(n*oh*ow, kh*kw*cin)`` patch matrix with columns ordered (kh, kw, cin) like HWIO."""
    n, _, _, cin = xp.shape
    cols = np.empty((n, oh, ow, kh, kw, cin))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i:i + oh, j:j + ow, :]
    return cols.reshape(n * oh * ow, kh * kw * cin)


def conv2d_forward(x, weights, bias, padding="valid", return_cols=False):
    """Cross-correlate NHWC ``x`` with HWIO ``weights`` (no kernel flip).

    With ``return_cols`` also returns the im2col matrix for :func:`conv2d_backward`.
    """
    if x.ndim != 4 or weights.ndim != 4 or x.shape[3] != weights.shape[2]:
        raise ValueError(f"conv2d shape mismatch: input {x.shape}, kernel {weights.shape}")
    kh, kw, cin, cout = weights.shape
    xp, _ = _pad_input(x, kh, kw, padding)
    n, h, w, _ = xp.shape
    oh, ow = h - kh + 1, w - kw + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"conv2d kernel {weights.shape[:2]} larger than input {x.shape[1:3]}")
    cols = _im2col(xp, kh, kw, oh, ow)
    out = (cols @ weights.reshape(-1, cout) + bias).reshape(n, oh, ow, cout)
    return (out, cols) if return_cols else out


def conv2d_backward(x, weights, grad_out, padding="valid", cols=None, input_grad=True):
    """Gradients ``(grad_x, grad_w, grad_b)`` for :func:`conv2d_forward`.

    ``grad_x`` is None when ``input_grad`` is false.
    """
    kh, kw, cin, cout = weights.shape
    n, oh, ow, _ = grad_out.shape
    if cols is None:
        cols = _im2col(_pad_input(x, kh, kw, padding)[0], kh, kw, oh, ow)
    g2 = grad_out.reshape(-1, cout)
    grad_w = (cols.T @ g2).reshape(weights.shape)
    grad_b = g2.sum(axis=0)
    if not input_grad:
        return None, grad_w, grad_b
    gcols = (g2 @ weights.reshape(-1, cout).T).reshape(n, oh, ow, kh, kw, cin)
    if padding == "same":
        (t, b), (l, r) = same_padding(kh), same_padding(kw)
    else:
        t = b = l = r = 0
    gxp = np.zeros((n, x.shape[1] + t + b, x.shape[2] + l + r, cin))
    for i in range(kh):
        for j in range(kw):
            gxp[:, i:i + oh, j:j + ow, :] += gcols[:, :, :, i, j, :]
    return gxp[:, t:t + x.shape[1], l:l + x.shape[2], :], grad_w, grad_b


class Conv2D(Layer):
    def __init__(self, in_channels, filters, kernel=2, padding="valid", rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.kernel, self.padding = kernel, padding
        shape = (kernel, kernel, in_channels, filters)
        self.params["w"] = glorot_uniform(rng, shape, kernel * kernel * in_channels, kernel * kernel * filters)
        self.params["b"] = np.zeros(filters)

    def forward(self, x, training=False):
        self._x = x
        out, self._cols = conv2d_forward(x, self.params["w"], self.params["b"], self.padding, return_cols=True)
        return out

    def backward(self, grad):
        gx, gw, gb = conv2d_backward(self._x, self.params["w"], grad, self.padding,
                                     cols=self._cols, input_grad=self.input_grad)
        self.grads["w"], self.grads["b"] = gw, gb
        return gx

    def output_shape(self, input_shape):
        h, w, _ = input_shape
        filters = self.params["w"].shape[3]
        if self.padding == "same":
            return (h, w, filters)
        return (h - self.kernel + 1, w - self.kernel + 1, filters)


class MaxPool2D(Layer):
    """Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped."""

    def __init__(self, size=2):
        super().__init__()
        self.size = size

    def forward(self, x, training=False):
        if x.size == 0:
            raise ValueError("maxpool2d on empty input")
        n, h, w, c = x.shape
        s = self.size
        oh, ow = h // s, w // s
        if oh == 0 or ow == 0:
            raise ValueError(f"input {x.shape[1:3]} smaller than pool size {s}")
        views = [x[:, di:oh * s:s, dj:ow * s:s] for di in range(s) for dj in range(s)]
        out = views[0].copy()
        for v in views[1:]:
            np.maximum(out, v, out=out)
        # route each window's gradient to its first maximum in row-major order
        taken = np.zeros(out.shape, dtype=bool)
        self._masks = []
        for v in views:
            m = (v == out) & ~taken
            taken |= m
            self._masks.append(m)
        self._x_shape = x.shape
        return out

    def backward(self, grad):
        s = self.size
        oh, ow = grad.shape[1:3]
        gx = np.zeros(self._x_shape)
        for k, m in enumerate(self._masks):
            di, dj = divmod(k, s)
            gx[:, di:oh * s:s, dj:ow * s:s] = grad * m
        return gx

    def output_shape(self, input_shape):
        h, w, c = input_shape
        return (h // self.size, w // self.size, c)


class Flatten(Layer):
    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)


def dense_forward(x, w, b):
    return x @ w + b


def dense_backward(x, w, grad_out):
    return grad_out @ w.T, x.T @ grad_out, grad_out.sum(axis=0)


class Dense(Layer):
    def __init__(self, in_units, units, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["w"] = glorot_uniform(rng, (in_units, units), in_units, units)
        self.params["b"] = np.zeros(units)

    def forward(self, x, training=False):
        self._x = x
        return dense_forward(x, self.params["w"], self.params["b"])

    def backward(self, grad):
        gx, self.grads["w"], self.grads["b"] = dense_backward(self._x, self.params["w"], grad)
        return gx

    def output_shape(self, input_shape):
        return (self.params["w"].shape[1],)


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by ``1 / (1 - rate)`` while training."""

    def __init__(self, rate=0.5, rng=None):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng or np.random.default_rng(0)
        self._mask = None

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class Activation(Layer):
    def __init__(self, fn: str):
        super().__init__()
        if fn not in ("relu", "tanh", "softmax"):
            raise ValueError(f"unknown activation {fn!r}")
        self.fn = fn

    def forward(self, x, training=False):
        if self.fn == "relu":
            self._x = x
            return np.maximum(x, 0.0)
        self._y = np.tanh(x) if self.fn == "tanh" else softmax(x)
        return self._y

    def backward(self, grad):
        if self.fn == "relu":
            return grad * (self._x > 0)
        y = self._y
        if self.fn == "tanh":
            return grad * (1.0 - y * y)
        return y * (grad - (grad * y).sum(axis=-1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy of integer ``labels`` and its gradient w.r.t. ``logits``."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels))
    k = logits.shape[-1]
    if labels.shape[0] != logits.shape[0]:
        raise ValueError(f"{labels.shape[0]} labels for {logits.shape[0]} predictions")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must be integers in [0, {k - 1}]")
    logp = log_softmax(logits)
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n
