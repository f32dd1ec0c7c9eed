"""Slow, independent reference computations used to check the fast paths.

Nothing here imports the code it checks: gate matrices are restated, circuits
are multiplied out as dense Kronecker products, the DFT is summed term by
term, and convolution is a plain loop.
"""
from __future__ import annotations

import math
from functools import reduce

import numpy as np

_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_P0 = np.array([[1, 0], [0, 0]], dtype=complex)
_P1 = np.array([[0, 0], [0, 1]], dtype=complex)


def single_qubit_matrix(kind: str, angle: float | None = None) -> np.ndarray:
    if kind == "RX":
        return math.cos(angle / 2) * _I - 1j * math.sin(angle / 2) * _X
    if kind == "RY":
        return math.cos(angle / 2) * _I - 1j * math.sin(angle / 2) * _Y
    if kind == "RZ":
        return math.cos(angle / 2) * _I - 1j * math.sin(angle / 2) * _Z
    if kind == "H":
        return (_X + _Z) / math.sqrt(2)
    if kind == "T":
        return np.array([[1, 0], [0, complex(math.cos(math.pi / 4), math.sin(math.pi / 4))]])
    raise ValueError(kind)


def embed(ops: dict[int, np.ndarray], n_qubits: int) -> np.ndarray:
    """Kronecker product over all qubits; qubit 0 is the rightmost factor."""
    factors = [ops.get(q, _I) for q in reversed(range(n_qubits))]
    return reduce(np.kron, factors)


def dense_gate(kind: str, targets, angle, n_qubits: int) -> np.ndarray:
    if kind == "CNOT":
        c, t = targets
        return embed({c: _P0}, n_qubits) + embed({c: _P1, t: _X}, n_qubits)
    if kind == "CZ":
        c, t = targets
        return embed({c: _P0}, n_qubits) + embed({c: _P1, t: _Z}, n_qubits)
    if kind == "SWAP":
        a, b = targets
        terms = [embed({a: p, b: p}, n_qubits) for p in (_I, _X, _Y, _Z)]
        return sum(terms) / 2
    return embed({targets[0]: single_qubit_matrix(kind, angle)}, n_qubits)


def dense_unitary(gates, n_qubits: int) -> np.ndarray:
    """Full ``2**n`` unitary of a gate sequence (later gates multiply on the left)."""
    u = np.eye(1 << n_qubits, dtype=complex)
    for g in gates:
        u = dense_gate(g.kind, g.targets, g.angle, n_qubits) @ u
    return u


def product_state(angles) -> np.ndarray:
    """Ry(angle_i)|0> on each qubit i, combined as a Kronecker product."""
    n = len(angles)
    kets = {q: np.array([math.cos(a / 2), math.sin(a / 2)], dtype=complex) for q, a in enumerate(angles)}
    return reduce(np.kron, [kets[q] for q in reversed(range(n))])


def pauli_z_expectation(psi: np.ndarray, qubit: int, n_qubits: int) -> float:
    z = embed({qubit: _Z}, n_qubits)
    return float(np.real(np.vdot(psi, z @ psi)))


def dft(frame) -> np.ndarray:
    n = len(frame)
    k = np.arange(n)
    return np.array([np.sum(frame * np.exp(-2j * np.pi * m * k / n)) for m in range(n)])


def conv2d_loop(x, w, b, padding: str) -> np.ndarray:
    """Cross-correlation of one NHWC image with an HWIO kernel."""
    h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    if padding == "same":
        top, left = (kh - 1) // 2, (kw - 1) // 2
        xp = np.zeros((h + kh - 1, wd + kw - 1, cin))
        xp[top:top + h, left:left + wd] = x
        oh, ow = h, wd
    else:
        xp = x
        oh, ow = h - kh + 1, wd - kw + 1
    out = np.zeros((oh, ow, cout))
    for i in range(oh):
        for j in range(ow):
            for o in range(cout):
                acc = b[o]
                for di in range(kh):
                    for dj in range(kw):
                        for c in range(cin):
                            acc += xp[i + di, j + dj, c] * w[di, dj, c, o]
                out[i, j, o] = acc
    return out


def numerical_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (modified in place, restored)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        fp = f()
        x[i] = orig - eps
        fm = f()
        x[i] = orig
        grad[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """||a - n|| / (||a|| + ||n||), with ``floor`` guarding the all-zero case."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    den = max(np.linalg.norm(a) + np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / den)
