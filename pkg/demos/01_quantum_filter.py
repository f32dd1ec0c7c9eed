"""
A random quantum circuit as an image filter
===========================================

Build the seed-42 circuit, check it against a brute-force unitary, and push
one 2x2 patch through it.
"""
import numpy as np

from quanvo import oracles
from quanvo.qsim import QuantumState, expectation_z, random_circuit, run_circuit
from quanvo.quanv import QuanvFilter, quanv_patch, quanv_transform

# The circuit is fully determined by (n_qubits, n_gates, seed): the gate
# list below is the same on every machine.
circuit = random_circuit(4, 8, seed=42)
print(circuit.summary())
print(circuit.dumps())

# Simulate from a random product state and compare with the 16x16 matrix
# obtained by multiplying Kronecker-expanded gates.
rng = np.random.default_rng(0)
psi0 = oracles.product_state(rng.uniform(0, np.pi, 4))
state = run_circuit(QuantumState(4, psi0), circuit)
dense = oracles.dense_unitary(circuit.gates, 4) @ psi0
print("max amplitude difference vs dense unitary:", np.max(np.abs(state.amplitudes - dense)))
print("norm:", state.norm)
print("<Z> per qubit:", [round(expectation_z(state, q), 4) for q in range(4)])

# %%
# Encoding. Each pixel x in [0, 1] becomes an Ry(pi * x) rotation on its own
# qubit. With no gates after the encoding, qubit c reads back cos(pi * x_c).
empty = QuanvFilter(random_circuit(4, 0, 0))
patch = np.array([0.0, 0.25, 0.5, 1.0])
print("empty circuit:", quanv_patch(patch, empty), "cos(pi x):", np.cos(np.pi * patch))

# With the random gates the four channels mix.
flt = QuanvFilter(circuit)
print("seed-42 circuit:", quanv_patch(patch, flt))

# %%
# Whole image: non-overlapping 2x2 windows turn a 40x100 mel image into a
# 20x50 map with one channel per qubit.
image = rng.uniform(size=(40, 100, 1))
out = quanv_transform(image, flt)
print("quanv map:", out.shape, "range", out.min().round(3), out.max().round(3))
