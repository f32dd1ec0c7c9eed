import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quanvo import oracles
from quanvo.qsim import (
    KINDS,
    GateOp,
    QuantumState,
    RandomCircuit,
    Xoshiro256,
    apply_gate,
    expectation_z,
    gate_matrix,
    ground_state,
    random_circuit,
    run_circuit,
    splitmix64,
)

GOLDEN = Path(__file__).parent / "golden" / "circuit_seed42_q4_g8.txt"


def test_splitmix64_reference_vector():
    # published SplitMix64 outputs for seed 1234567
    expected = [6457827717110365317, 3203168211198807973, 9817491932198370423,
                4593380528125082431, 16408922859458223821]
    s, out = 1234567, []
    for _ in range(5):
        s, o = splitmix64(s)
        out.append(o)
    assert out == expected


def test_xoshiro256ss_reference_vector():
    # xoshiro256** reference outputs from state {1, 2, 3, 4}
    rng = Xoshiro256(0)
    rng._s = [1, 2, 3, 4]
    assert [rng.next_u64() for _ in range(6)] == [
        11520, 0, 1509978240, 1215971899390074240, 1216172134540287360, 607988272756665600,
    ]


def test_uniform_range():
    rng = Xoshiro256(7)
    u = [rng.uniform() for _ in range(2000)]
    assert 0.0 <= min(u) and max(u) < 1.0
    assert abs(np.mean(u) - 0.5) < 0.03


class TestGroundState:
    def test_two_qubits(self):
        np.testing.assert_array_equal(ground_state(2).amplitudes, [1, 0, 0, 0])

    def test_four_qubits(self):
        s = ground_state(4)
        assert s.amplitudes.shape == (16,)
        assert s.norm == 1.0

    @pytest.mark.parametrize("n", [0, 13])
    def test_bounds(self, n):
        with pytest.raises(ValueError):
            ground_state(n)


class TestApplyGate:
    def test_ry_pi_flips(self):
        s = apply_gate(ground_state(1), GateOp("RY", (0,), math.pi))
        assert abs(abs(s.amplitudes[1]) - 1) < 1e-15
        assert expectation_z(s, 0) == pytest.approx(-1.0, abs=1e-15)

    def test_hadamard(self):
        s = apply_gate(ground_state(1), GateOp("H", (0,)))
        np.testing.assert_allclose(s.amplitudes, [1 / math.sqrt(2)] * 2, atol=1e-15)

    def test_cnot_control_set(self):
        # |01>: qubit 0 set, index 1; CNOT(0 -> 1) gives |11>, index 3
        s = apply_gate(ground_state(2), GateOp("RY", (0,), math.pi))
        s = apply_gate(s, GateOp("CNOT", (0, 1)))
        np.testing.assert_allclose(np.abs(s.amplitudes), [0, 0, 0, 1], atol=1e-15)

    def test_cnot_control_clear_is_identity(self):
        s = apply_gate(ground_state(2), GateOp("RY", (1,), math.pi))
        t = apply_gate(s, GateOp("CNOT", (0, 1)))
        np.testing.assert_array_equal(s.amplitudes, t.amplitudes)

    def test_swap_moves_excitation(self):
        s = apply_gate(ground_state(3), GateOp("RY", (0,), math.pi))
        s = apply_gate(s, GateOp("SWAP", (0, 2)))
        assert abs(s.amplitudes[4]) == pytest.approx(1.0)

    def test_cz_phase(self):
        s = apply_gate(ground_state(2), GateOp("H", (0,)))
        s = apply_gate(s, GateOp("H", (1,)))
        s = apply_gate(s, GateOp("CZ", (0, 1)))
        np.testing.assert_allclose(s.amplitudes, [0.5, 0.5, 0.5, -0.5], atol=1e-15)

    def test_target_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            apply_gate(ground_state(2), GateOp("H", (2,)))

    @pytest.mark.parametrize("bad", [
        dict(kind="CNOT", targets=(1, 1)),
        dict(kind="RX", targets=(0,)),
        dict(kind="H", targets=(0,), angle=0.1),
        dict(kind="RY", targets=(0,), angle=float("nan")),
        dict(kind="FOO", targets=(0,)),
    ])
    def test_invalid_gate(self, bad):
        with pytest.raises(ValueError):
            GateOp(**bad)


@pytest.mark.parametrize("kind", KINDS)
def test_gate_unitarity(kind):
    arity = 2 if kind in ("CNOT", "SWAP", "CZ") else 1
    angle = 0.731 if kind.startswith("R") else None
    g = GateOp(kind, tuple(range(arity)), angle)
    m = gate_matrix(g)
    assert np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) < 1e-12
    dense = oracles.dense_gate(kind, g.targets, angle, 4)
    assert np.max(np.abs(dense.conj().T @ dense - np.eye(16))) < 1e-12


class TestRunCircuit:
    def test_empty_is_identity(self):
        s = apply_gate(ground_state(4), GateOp("H", (2,)))
        t = run_circuit(s, RandomCircuit(4))
        np.testing.assert_array_equal(s.amplitudes, t.amplitudes)

    def test_matches_dense_oracle(self):
        for seed in range(20):
            c = random_circuit(4, 12, seed)
            rng = np.random.default_rng(seed)
            psi = rng.normal(size=16) + 1j * rng.normal(size=16)
            psi /= np.linalg.norm(psi)
            from quanvo.qsim import QuantumState
            out = run_circuit(QuantumState(4, psi), c).amplitudes
            ref = oracles.dense_unitary(c.gates, 4) @ psi
            assert np.max(np.abs(out - ref)) < 1e-10

    def test_disjoint_gates_commute(self):
        a = GateOp("RY", (0,), 0.4)
        b = GateOp("RY", (1,), 1.3)
        s1 = run_circuit(ground_state(4), RandomCircuit(4, (a, b)))
        s2 = run_circuit(ground_state(4), RandomCircuit(4, (b, a)))
        np.testing.assert_allclose(s1.amplitudes, s2.amplitudes, atol=1e-15)

    def test_qubit_mismatch(self):
        with pytest.raises(ValueError):
            run_circuit(ground_state(3), RandomCircuit(4))


class TestExpectationZ:
    def test_ground(self):
        s = ground_state(4)
        assert [expectation_z(s, q) for q in range(4)] == [1.0] * 4

    def test_equator(self):
        s = apply_gate(ground_state(1), GateOp("RY", (0,), math.pi / 2))
        assert abs(expectation_z(s, 0)) < 1e-12

    def test_index_error(self):
        with pytest.raises(ValueError):
            expectation_z(ground_state(2), 2)

    def test_matches_dense_observable(self):
        c = random_circuit(4, 10, 3)
        s = run_circuit(ground_state(4), c)
        for q in range(4):
            assert expectation_z(s, q) == pytest.approx(oracles.pauli_z_expectation(s.amplitudes, q, 4), abs=1e-12)

    def test_basis_states_exact(self):
        for idx in range(16):
            amps = np.zeros(16, dtype=complex)
            amps[idx] = 1
            from quanvo.qsim import QuantumState
            s = QuantumState(4, amps)
            for q in range(4):
                assert expectation_z(s, q) == (1.0 if not (idx >> q) & 1 else -1.0)


class TestRandomCircuit:
    def test_empty(self):
        assert random_circuit(4, 0, 1).gates == ()

    def test_deterministic(self):
        assert random_circuit(4, 30, 99) == random_circuit(4, 30, 99)

    def test_seed_changes_circuit(self):
        assert random_circuit(4, 30, 1).gates != random_circuit(4, 30, 2).gates

    def test_golden_trace(self):
        assert random_circuit(4, 8, 42).dumps() == GOLDEN.read_text()

    def test_serialization_roundtrip(self, tmp_path):
        c = random_circuit(4, 25, 5)
        c.save(tmp_path / "c.txt")
        assert RandomCircuit.load(tmp_path / "c.txt") == c

    def test_single_qubit_register_rejects_two_qubit_kinds(self):
        c = random_circuit(1, 200, 3)
        assert all(len(g.targets) == 1 for g in c.gates)

    def test_kind_distribution_roughly_uniform(self):
        c = random_circuit(4, 8000, 11)
        counts = np.array([sum(g.kind == k for g in c.gates) for k in KINDS])
        assert np.all(np.abs(counts - 1000) < 150)

    def test_negative_gate_count(self):
        with pytest.raises(ValueError):
            random_circuit(4, -1, 0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**63), depth=st.integers(0, 30))
def test_norm_and_expectation_bounds(seed, depth):
    s = run_circuit(ground_state(4), random_circuit(4, depth, seed))
    assert abs(s.norm - 1) < 1e-10
    assert all(-1 <= expectation_z(s, q) <= 1 for q in range(4))


def test_norm_preserved_over_1000_circuits():
    rng = np.random.default_rng(1000)
    worst = 0.0
    for seed in range(1000):
        psi0 = oracles.product_state(rng.uniform(0, np.pi, 4))
        s = run_circuit(QuantumState(4, psi0), random_circuit(4, int(rng.integers(0, 31)), seed))
        worst = max(worst, abs(s.norm - 1))
    assert worst < 1e-10
