"""Dense statevector simulation of Pauli-rotation circuits.

Basis index bit ``q`` is the occupation of qubit ``q`` (little-endian), so a
computational basis index is also a determinant bitmask.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence, Tuple

import numpy as np

from .qubit import PauliString, PauliTerm, QubitOperator, parity_sign, string_masks

MAX_QUBITS = 24
NORM_TOL = 1e-10
P_FLOOR = 1e-12


class Statevector:
    """Mutable amplitude buffer of length ``2**n_qubits``."""

    def __init__(self, amplitudes: np.ndarray, n_qubits: int | None = None):
        amplitudes = np.asarray(amplitudes, dtype=complex)
        if n_qubits is None:
            n_qubits = int(amplitudes.size).bit_length() - 1
        if amplitudes.shape != (1 << n_qubits,):
            raise ValueError(f"amplitude vector of shape {amplitudes.shape} is not 2**{n_qubits}")
        if n_qubits > MAX_QUBITS:
            raise ValueError(f"{n_qubits} qubits exceeds the limit of {MAX_QUBITS}")
        self.amplitudes = amplitudes
        self.n_qubits = n_qubits

    def copy(self) -> "Statevector":
        return Statevector(self.amplitudes.copy(), self.n_qubits)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __repr__(self):
        return f"Statevector(n_qubits={self.n_qubits})"


def prepare_reference(n_qubits: int, occupied: Iterable[int]) -> Statevector:
    occupied = list(occupied)
    if len(set(occupied)) != len(occupied):
        raise ValueError(f"duplicate qubit in occupation {occupied}")
    index = 0
    for q in occupied:
        if not 0 <= q < n_qubits:
            raise ValueError(f"qubit {q} out of range for {n_qubits} qubits")
        index |= 1 << q
    amps = np.zeros(1 << n_qubits, dtype=complex)
    amps[index] = 1.0
    return Statevector(amps, n_qubits)


@lru_cache(maxsize=512)
def _rotation_tables(n_qubits: int, paulis: PauliString) -> Tuple[np.ndarray, np.ndarray]:
    """Partner index and the phase of P on each source index: P|j> = phase[j] |j ^ x>."""
    x, z, ny = string_masks(paulis)
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    phase = (1j) ** ny * parity_sign(idx & z)
    partner = idx ^ x
    partner.setflags(write=False)
    phase.setflags(write=False)
    return partner, phase


def apply_pauli_string(state: Statevector, paulis: PauliString) -> np.ndarray:
    """Return P|psi> as a fresh amplitude array."""
    partner, phase = _rotation_tables(state.n_qubits, tuple(paulis))
    out = np.empty_like(state.amplitudes)
    out[partner] = phase * state.amplitudes
    return out


def apply_pauli_rotation(state: Statevector, term: PauliTerm | PauliString, angle: float) -> Statevector:
    """In-place ``exp(-i angle/2 P)``; returns ``state`` for chaining."""
    paulis = term.paulis if isinstance(term, PauliTerm) else tuple(term)
    for q, _ in paulis:
        if not 0 <= q < state.n_qubits:
            raise ValueError(f"qubit {q} out of range for {state.n_qubits} qubits")
    if not paulis:
        state.amplitudes *= np.exp(-0.5j * angle)
        return state
    p_psi = apply_pauli_string(state, paulis)
    state.amplitudes *= np.cos(0.5 * angle)
    state.amplitudes += (-1j * np.sin(0.5 * angle)) * p_psi
    return state


def apply_circuit(state: Statevector, rotations: Iterable[Tuple[PauliString, float]]) -> Statevector:
    for paulis, angle in rotations:
        apply_pauli_rotation(state, paulis, angle)
    return state


def expectation(state: Statevector, op: QubitOperator, hermitian_tol: float = 1e-9) -> float:
    if op.n_qubits != state.n_qubits:
        raise ValueError(f"operator acts on {op.n_qubits} qubits, state has {state.n_qubits}")
    total = 0j
    psi = state.amplitudes
    for paulis, coeff in op.terms.items():
        if paulis:
            total += coeff * np.vdot(psi, apply_pauli_string(state, paulis))
        else:
            total += coeff * np.vdot(psi, psi)
    if all(np.imag(c) == 0 for c in op.terms.values()) and abs(total.imag) >= hermitian_tol:
        raise ArithmeticError(f"Hermitian expectation has imaginary part {total.imag:.3e}")
    return float(total.real)


@dataclass(frozen=True)
class MeasurementRecord:
    """Observed determinants and their weights.

    Sampled records hold integer counts summing to ``total_shots``. Exact
    records hold probabilities and ``total_shots`` is 0.
    """

    counts: Mapping[int, float]
    total_shots: int
    exact: bool = False

    def __post_init__(self):
        if not self.exact and sum(self.counts.values()) != self.total_shots:
            raise ValueError("counts do not sum to total_shots")

    def __len__(self):
        return len(self.counts)


def sample(state: Statevector, n_shots: int, rng_seed: int | np.random.Generator | None = None) -> MeasurementRecord:
    if n_shots < 1:
        raise ValueError(f"n_shots must be >= 1, got {n_shots}")
    rng = np.random.default_rng(rng_seed)
    probs = state.probabilities()
    probs = probs / probs.sum()
    draws = rng.multinomial(n_shots, probs)
    nz = np.flatnonzero(draws)
    return MeasurementRecord({int(i): int(draws[i]) for i in nz}, n_shots)


def exact_distribution(state: Statevector, p_floor: float = P_FLOOR) -> MeasurementRecord:
    probs = state.probabilities()
    keep = np.flatnonzero(probs >= p_floor)
    return MeasurementRecord({int(i): float(probs[i]) for i in keep}, 0, exact=True)


def state_from_rotations(n_qubits: int, occupied: Sequence[int], rotations) -> Statevector:
    return apply_circuit(prepare_reference(n_qubits, occupied), rotations)
