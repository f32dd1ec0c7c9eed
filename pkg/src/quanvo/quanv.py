"""Quanvolutional feature map: 2x2 patches -> Ry encoding -> fixed random circuit -> <Z> per qubit."""
from __future__ import annotations

import hashlib
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import qsim
from .dsp import image_from_bytes, image_to_bytes

log = logging.getLogger(__name__)

CACHE_MAGIC = b"QVCACHE1"
PATCH = 2
N_QUBITS = PATCH * PATCH


class StaleCacheError(RuntimeError):
    """Cache file was built for a different filter or image set."""


@dataclass(frozen=True)
class QuanvFilter:
    circuit: qsim.RandomCircuit = field(default_factory=lambda: qsim.random_circuit(N_QUBITS, 8, 0))
    stride: int = 2
    scale: float = math.pi

    def __post_init__(self):
        if self.circuit.n_qubits != N_QUBITS:
            raise ValueError(f"a 2x2 filter needs a {N_QUBITS}-qubit circuit, got {self.circuit.n_qubits}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")

    @classmethod
    def from_seed(cls, seed: int, n_gates: int = 2 * N_QUBITS, stride: int = 2, scale: float = math.pi):
        return cls(qsim.random_circuit(N_QUBITS, n_gates, seed), stride, scale)


def encode_patch(patch, scale: float = math.pi) -> np.ndarray:
    x = np.asarray(patch, dtype=np.float64)
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise ValueError(f"patch values must lie in [0, 1], got {x.ravel().tolist()}")
    return scale * x


def _product_states(angles: np.ndarray) -> np.ndarray:
    """Ry(angles[..., q])|0> on each qubit q, as ``(..., 2**n)`` amplitudes."""
    n = angles.shape[-1]
    c, s = np.cos(angles / 2), np.sin(angles / 2)
    amps = np.ones(angles.shape[:-1] + (1,), dtype=complex)
    # building from qubit n-1 down puts qubit 0 in the least-significant bit
    for q in reversed(range(n)):
        ket = np.stack([c[..., q], s[..., q]], axis=-1)
        amps = (amps[..., :, None] * ket[..., None, :]).reshape(*angles.shape[:-1], -1)
    return amps


def quanv_patches(patches: np.ndarray, flt: QuanvFilter) -> np.ndarray:
    """Vectorised :func:`quanv_patch` over ``(..., 4)`` patch values."""
    angles = encode_patch(patches, flt.scale)
    amps = qsim.run_circuit_batch(_product_states(angles), flt.circuit)
    return qsim.expectation_z_batch(amps, N_QUBITS)


def quanv_patch(patch, flt: QuanvFilter) -> np.ndarray:
    """Four Pauli-Z expectations, one per qubit, for a flattened 2x2 patch.

    Patch element ``i`` (row-major: top-left, top-right, bottom-left,
    bottom-right) drives qubit ``i``.
    """
    patch = np.asarray(patch, dtype=np.float64).reshape(N_QUBITS)
    return quanv_patches(patch[None, :], flt)[0]


def quanv_transform(img: np.ndarray, flt: QuanvFilter) -> np.ndarray:
    """(H, W, 1) image in [0, 1] -> (H', W', 4) expectation map."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 1:
        raise ValueError(f"quanv_transform expects a single-channel (H, W, 1) image, got {img.shape}")
    h, w = img.shape[:2]
    s = flt.stride
    for axis, size in (("height", h), ("width", w)):
        if size < PATCH or (size - PATCH) % s:
            raise ValueError(f"image {axis} {size} is not compatible with stride {s} and a 2x2 patch")
    windows = np.lib.stride_tricks.sliding_window_view(img[:, :, 0], (PATCH, PATCH))[::s, ::s]
    patches = windows.reshape(windows.shape[0], windows.shape[1], N_QUBITS)
    return quanv_patches(patches, flt)


# -- dataset cache ------------------------------------------------------------

def image_set_hash(images) -> bytes:
    h = hashlib.sha256()
    for img in images:
        h.update(image_to_bytes(img))
    return h.digest()


def _header(flt: QuanvFilter, digest: bytes, count: int) -> bytes:
    return CACHE_MAGIC + struct.pack("<QII", flt.circuit.seed & (2**64 - 1), len(flt.circuit), flt.stride) \
        + digest + struct.pack("<I", count)


def write_cache(path, flt: QuanvFilter, digest: bytes, outputs) -> None:
    parts = [_header(flt, digest, len(outputs))]
    parts += [image_to_bytes(o) for o in outputs]
    Path(path).write_bytes(b"".join(parts))


def read_cache(path, flt: QuanvFilter, digest: bytes) -> list[np.ndarray]:
    """Load cached transforms; raises :class:`StaleCacheError` if the key differs."""
    buf = Path(path).read_bytes()
    if buf[:8] != CACHE_MAGIC:
        raise StaleCacheError(f"{path} is not a QVCACHE1 file")
    seed, n_gates, stride = struct.unpack_from("<QII", buf, 8)
    stored = buf[24:56]
    (count,) = struct.unpack_from("<I", buf, 56)
    expected = (flt.circuit.seed & (2**64 - 1), len(flt.circuit), flt.stride)
    if (seed, n_gates, stride) != expected:
        raise StaleCacheError(f"{path} built for (seed, n_gates, stride)={(seed, n_gates, stride)}, need {expected}")
    if stored != digest:
        raise StaleCacheError(f"{path} built from a different image set")
    out, offset = [], 60
    for _ in range(count):
        img, offset = image_from_bytes(buf, offset)
        out.append(img)
    return out


def _keyed_by_header(flt: QuanvFilter) -> bool:
    """True when (seed, n_gates, stride) in the cache header pin the filter down completely."""
    c = flt.circuit
    return flt.scale == math.pi and c == qsim.random_circuit(c.n_qubits, len(c), c.seed)


def transform_dataset(images, flt: QuanvFilter, cache_path=None) -> list[np.ndarray]:
    """Quanv-transform every image, serving from / refreshing ``cache_path`` when given.

    Filters the cache header cannot identify (hand-built circuits, non-default
    encoding scale) bypass the cache.
    """
    images = [np.asarray(i, dtype=np.float64) for i in images]
    if len({i.shape for i in images}) > 1:
        raise ValueError("all images must share one shape")
    if cache_path is not None and not _keyed_by_header(flt):
        log.warning("filter is not reproducible from its seed; not using cache %s", cache_path)
        cache_path = None
    digest = image_set_hash(images)
    if cache_path is not None and Path(cache_path).exists():
        try:
            return read_cache(cache_path, flt, digest)
        except StaleCacheError as exc:
            log.warning("regenerating quanv cache: %s", exc)
    outputs = [quanv_transform(img, flt) for img in images]
    if cache_path is not None:
        write_cache(cache_path, flt, digest, outputs)
    return outputs
