import numpy as np
import pytest
from scipy.linalg import expm

from conftest import H2_CASCI, H2_HF, random_state
from gqkae.qubit import QubitOperator, qubit_hamiltonian
from gqkae.simulator import (
    Statevector,
    apply_pauli_rotation,
    exact_distribution,
    expectation,
    prepare_reference,
    sample,
)
from test_qubit import string_matrix

LETTERS = "XYZ"


def z_expectation(state, q=0):
    return expectation(state, QubitOperator(state.n_qubits, {((q, "Z"),): 1.0}))


def test_prepare_reference():
    s = prepare_reference(2, [0])
    assert s.amplitudes[0b01] == 1 and np.count_nonzero(s.amplitudes) == 1
    assert z_expectation(prepare_reference(1, [])) == 1.0
    with pytest.raises(ValueError):
        prepare_reference(2, [0, 0])
    with pytest.raises(ValueError):
        prepare_reference(2, [2])


def test_hf_expectation(h2):
    s = prepare_reference(4, h2.hartree_fock_occupation())
    assert abs(expectation(s, qubit_hamiltonian(h2)) - H2_HF) < 1e-10


def test_ground_state_expectation(h2):
    H = qubit_hamiltonian(h2)
    w, v = np.linalg.eigh(H.to_dense())
    dets = [d for d in range(16) if bin(d).count("1") == 2]
    # pick the lowest eigenvector supported in the 2-electron sector
    k = next(i for i in range(16) if np.sum(np.abs(v[dets, i]) ** 2) > 0.99)
    assert abs(expectation(Statevector(v[:, k], 4), H) - H2_CASCI) < 1e-10


def test_identity_expectation(rng):
    s = Statevector(random_state(3, rng), 3)
    assert abs(expectation(s, QubitOperator.identity(3, 2.5)) - 2.5) < 1e-12
    with pytest.raises(ValueError):
        expectation(s, QubitOperator.identity(2))


def test_z_rotation_global_phase():
    s = apply_pauli_rotation(prepare_reference(1, []), ((0, "Z"),), np.pi)
    assert np.allclose(s.amplitudes, [np.exp(-0.5j * np.pi), 0])


def test_y_rotation():
    s = apply_pauli_rotation(prepare_reference(1, []), ((0, "Y"),), 0.3)
    assert abs(z_expectation(s) - 0.955336489125606) < 1e-12


def test_xx_rotation():
    s = apply_pauli_rotation(prepare_reference(2, []), ((0, "X"), (1, "X")), np.pi)
    assert np.allclose(s.amplitudes, [0, 0, 0, -1j], atol=1e-15)


def test_rotation_matches_expm(rng):
    for _ in range(100):
        n = int(rng.integers(1, 7))
        support = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        paulis = tuple(sorted((int(q), LETTERS[rng.integers(3)]) for q in support))
        angle = rng.uniform(-2 * np.pi, 2 * np.pi)
        psi = random_state(n, rng)
        ref = expm(-0.5j * angle * string_matrix(paulis, n)) @ psi
        out = apply_pauli_rotation(Statevector(psi.copy(), n), paulis, angle)
        assert np.max(np.abs(out.amplitudes - ref)) < 1e-10


def test_norm_preserved_over_long_circuits(rng):
    s = Statevector(random_state(5, rng), 5)
    for _ in range(1000):
        support = rng.choice(5, size=int(rng.integers(1, 6)), replace=False)
        paulis = tuple(sorted((int(q), LETTERS[rng.integers(3)]) for q in support))
        apply_pauli_rotation(s, paulis, rng.uniform(-np.pi, np.pi))
    assert abs(s.norm() - 1) < 1e-9


def test_rotation_rejects_out_of_range():
    with pytest.raises(ValueError):
        apply_pauli_rotation(prepare_reference(2, []), ((3, "X"),), 0.1)


def test_basis_state_sampling():
    rec = sample(prepare_reference(3, [0, 2]), 500, 7)
    assert rec.counts == {0b101: 500}
    assert rec.total_shots == 500
    with pytest.raises(ValueError):
        sample(prepare_reference(1, []), 0, 0)


def test_uniform_sampling_within_five_sigma():
    n = 100_000
    rec = sample(Statevector(np.full(4, 0.5), 2), n, 11)
    sigma = np.sqrt(0.25 * 0.75 / n)
    for x in range(4):
        assert abs(rec.counts[x] / n - 0.25) < 5 * sigma


def test_sampling_deterministic():
    s = Statevector(np.full(8, 1 / np.sqrt(8)), 3)
    assert sample(s, 1000, 3).counts == sample(s, 1000, 3).counts


def test_total_variation(rng):
    for seed in range(3):
        s = Statevector(random_state(4, rng), 4)
        rec = sample(s, 100_000, seed)
        emp = np.zeros(16)
        for k, v in rec.counts.items():
            emp[k] = v / rec.total_shots
        assert 0.5 * np.abs(emp - s.probabilities()).sum() < 0.02


def test_exact_mode_bell():
    s = Statevector(np.array([1, 0, 0, 1]) / np.sqrt(2), 2)
    rec = exact_distribution(s)
    assert rec.exact
    assert set(rec.counts) == {0, 3}
    assert all(abs(p - 0.5) < 1e-15 for p in rec.counts.values())
