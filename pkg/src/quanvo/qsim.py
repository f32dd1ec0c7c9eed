"""Dense state-vector simulation for few-qubit circuits.

Conventions
-----------
* Qubit 0 is the least-significant bit of the amplitude index, so basis
  state ``|q3 q2 q1 q0>`` lives at index ``q0 + 2*q1 + 4*q2 + 8*q3``.
* ``Ry(t) = [[cos(t/2), -sin(t/2)], [sin(t/2), cos(t/2)]]`` and likewise
  ``Rx(t) = exp(-i t X / 2)``, ``Rz(t) = diag(exp(-i t/2), exp(i t/2))``.
* CNOT targets are ``(control, target)``.

Random circuits are drawn from :class:`Xoshiro256`, a xoshiro256** generator
whose 256-bit state is filled by four successive SplitMix64 outputs of the
seed. Draw order per gate:

1. kind ``= KINDS[uniform_int(8)]``; a two-qubit kind on a one-qubit register
   is rejected and redrawn,
2. first target ``uniform_int(n)``; for two-qubit kinds a second target
   ``uniform_int(n - 1)``, incremented by one if ``>=`` the first,
3. angle ``2*pi*uniform()`` for rotation kinds.

where ``uniform() = (next_u64 >> 11) * 2**-53`` and
``uniform_int(k) = floor(uniform() * k)``. Any implementation following these
rules reproduces the same circuits from the same seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_QUBITS = 12
KINDS = ("RX", "RY", "RZ", "H", "T", "CNOT", "SWAP", "CZ")
ROTATIONS = frozenset({"RX", "RY", "RZ"})
TWO_QUBIT = frozenset({"CNOT", "SWAP", "CZ"})

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 state; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256:
    """xoshiro256** seeded through SplitMix64 (portable, pure Python)."""

    def __init__(self, seed: int):
        sm = seed & _MASK64
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_int(self, k: int) -> int:
        return int(self.uniform() * k)


@dataclass(frozen=True)
class GateOp:
    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        arity = 2 if self.kind in TWO_QUBIT else 1
        if len(self.targets) != arity:
            raise ValueError(f"{self.kind} takes {arity} target(s), got {self.targets}")
        if len(set(self.targets)) != arity:
            raise ValueError(f"{self.kind} targets must be distinct, got {self.targets}")
        if any(q < 0 for q in self.targets):
            raise ValueError(f"negative qubit index in {self.targets}")
        if (self.angle is not None) != (self.kind in ROTATIONS):
            raise ValueError(f"{self.kind}: angle must be given iff the gate is a rotation")
        if self.angle is not None and not math.isfinite(self.angle):
            raise ValueError(f"{self.kind}: angle must be finite")

    def to_line(self) -> str:
        line = f"{self.kind} {','.join(map(str, self.targets))}"
        if self.angle is not None:
            line += f";{self.angle:.17g}"
        return line

    @classmethod
    def from_line(cls, line: str) -> GateOp:
        body, _, angle = line.strip().partition(";")
        kind, _, targets = body.partition(" ")
        return cls(
            kind,
            tuple(int(t) for t in targets.split(",")),
            float(angle) if angle else None,
        )


@dataclass(frozen=True)
class RandomCircuit:
    n_qubits: int
    gates: tuple[GateOp, ...] = ()
    seed: int = 0

    def __len__(self):
        return len(self.gates)

    def dumps(self) -> str:
        lines = [f"qubits={self.n_qubits} seed={self.seed}"]
        lines += [g.to_line() for g in self.gates]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> RandomCircuit:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = dict(kv.split("=", 1) for kv in lines[0].split())
        gates = tuple(GateOp.from_line(ln) for ln in lines[1:])
        return cls(int(header["qubits"]), gates, int(header["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> RandomCircuit:
        return cls.loads(Path(path).read_text())

    def summary(self) -> str:
        counts = {k: 0 for k in KINDS}
        for g in self.gates:
            counts[g.kind] += 1
        used = ", ".join(f"{k}x{v}" for k, v in counts.items() if v)
        return f"{self.n_qubits}-qubit circuit, seed {self.seed}, {len(self.gates)} gates ({used or 'empty'})"


def random_circuit(n_qubits: int, n_gates: int, seed: int) -> RandomCircuit:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    if n_gates < 0:
        raise ValueError(f"n_gates must be >= 0, got {n_gates}")
    rng = Xoshiro256(seed)
    gates = []
    for _ in range(n_gates):
        kind = KINDS[rng.uniform_int(len(KINDS))]
        while kind in TWO_QUBIT and n_qubits < 2:
            kind = KINDS[rng.uniform_int(len(KINDS))]
        first = rng.uniform_int(n_qubits)
        if kind in TWO_QUBIT:
            second = rng.uniform_int(n_qubits - 1)
            if second >= first:
                second += 1
            targets = (first, second)
        else:
            targets = (first,)
        angle = 2.0 * math.pi * rng.uniform() if kind in ROTATIONS else None
        gates.append(GateOp(kind, targets, angle))
    return RandomCircuit(n_qubits, tuple(gates), seed)


def gate_matrix(gate: GateOp) -> np.ndarray:
    """The gate's own 2x2 or 4x4 unitary.

    Two-qubit matrices act on ``|t0 t1>`` with ``targets[0]`` as the high bit.
    """
    k, t = gate.kind, gate.angle
    if k == "RX":
        c, s = math.cos(t / 2), math.sin(t / 2)
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if k == "RY":
        c, s = math.cos(t / 2), math.sin(t / 2)
        return np.array([[c, -s], [s, c]], dtype=complex)
    if k == "RZ":
        return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])
    if k == "H":
        return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    if k == "T":
        return np.diag([1, np.exp(0.25j * math.pi)])
    if k == "CNOT":
        return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    if k == "SWAP":
        return np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
    return np.diag([1, 1, 1, -1]).astype(complex)  # CZ


@dataclass
class QuantumState:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {self.amplitudes.shape}"
            )

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def ground_state(n_qubits: int) -> QuantumState:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    amps = np.zeros(1 << n_qubits, dtype=complex)
    amps[0] = 1.0
    return QuantumState(n_qubits, amps)


def _check_targets(gate: GateOp, n_qubits: int) -> None:
    for q in gate.targets:
        if q >= n_qubits:
            raise ValueError(f"{gate.kind} target {q} out of range for {n_qubits} qubits")


def apply_gate_batch(amps: np.ndarray, gate: GateOp, n_qubits: int) -> np.ndarray:
    """Apply ``gate`` to a stack of state vectors with shape ``(..., 2**n)``."""
    _check_targets(gate, n_qubits)
    lead = amps.shape[:-1]
    if gate.kind not in TWO_QUBIT:
        q = gate.targets[0]
        view = amps.reshape(-1, 1 << (n_qubits - 1 - q), 2, 1 << q)
        out = np.einsum("ij,bajc->baic", gate_matrix(gate), view)
        return out.reshape(*lead, 1 << n_qubits)

    idx = np.arange(1 << n_qubits)
    a, b = gate.targets
    bit_a = (idx >> a) & 1
    bit_b = (idx >> b) & 1
    if gate.kind == "CZ":
        phase = np.where(bit_a & bit_b, -1.0, 1.0)
        return amps * phase
    if gate.kind == "CNOT":
        perm = np.where(bit_a == 1, idx ^ (1 << b), idx)
    else:  # SWAP
        perm = np.where(bit_a != bit_b, idx ^ ((1 << a) | (1 << b)), idx)
    return amps[..., perm]


def apply_gate(state: QuantumState, gate: GateOp) -> QuantumState:
    return QuantumState(state.n_qubits, apply_gate_batch(state.amplitudes, gate, state.n_qubits))


def run_circuit_batch(amps: np.ndarray, circuit: RandomCircuit) -> np.ndarray:
    for gate in circuit.gates:
        amps = apply_gate_batch(amps, gate, circuit.n_qubits)
    return amps


def run_circuit(state: QuantumState, circuit: RandomCircuit) -> QuantumState:
    if circuit.n_qubits != state.n_qubits:
        raise ValueError(
            f"circuit acts on {circuit.n_qubits} qubits but the state has {state.n_qubits}"
        )
    return QuantumState(state.n_qubits, run_circuit_batch(state.amplitudes, circuit))


def expectation_z_batch(amps: np.ndarray, n_qubits: int) -> np.ndarray:
    """<Z_q> for every qubit; returns shape ``(..., n_qubits)``."""
    probs = np.abs(amps) ** 2
    idx = np.arange(1 << n_qubits)
    signs = 1.0 - 2.0 * ((idx[:, None] >> np.arange(n_qubits)) & 1)
    # rounding can push |<Z>| a hair past 1
    return np.clip(probs @ signs, -1.0, 1.0)


def expectation_z(state: QuantumState, qubit: int) -> float:
    if not 0 <= qubit < state.n_qubits:
        raise ValueError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    return float(expectation_z_batch(state.amplitudes, state.n_qubits)[qubit])
