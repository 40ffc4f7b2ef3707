"""Pauli-string algebra and the Jordan-Wigner mapping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import numpy as np
from scipy import sparse

from .fermion import MERGE_EPS, FermionOperator

PauliString = Tuple[Tuple[int, str], ...]

# single-qubit products: (a, b) -> (phase, result) with a*b = phase * result
_PRODUCT = {
    ("X", "X"): (1, "I"), ("Y", "Y"): (1, "I"), ("Z", "Z"): (1, "I"),
    ("X", "Y"): (1j, "Z"), ("Y", "X"): (-1j, "Z"),
    ("Y", "Z"): (1j, "X"), ("Z", "Y"): (-1j, "X"),
    ("Z", "X"): (1j, "Y"), ("X", "Z"): (-1j, "Y"),
}


def multiply_strings(a: PauliString, b: PauliString) -> Tuple[complex, PauliString]:
    phase: complex = 1
    merged = dict(a)
    for q, p in b:
        if q in merged:
            ph, r = _PRODUCT[(merged[q], p)]
            phase *= ph
            if r == "I":
                del merged[q]
            else:
                merged[q] = r
        else:
            merged[q] = p
    return phase, tuple(sorted(merged.items()))


def parity_sign(values: np.ndarray) -> np.ndarray:
    """(-1) ** popcount(v), elementwise."""
    return 1 - 2 * (np.bitwise_count(values) & 1).astype(np.int64)


def string_masks(paulis: PauliString) -> Tuple[int, int, int]:
    """(x_mask, z_mask, n_y) so that P = i**n_y X^x Z^z."""
    x = z = ny = 0
    for q, p in paulis:
        if p in "XY":
            x |= 1 << q
        if p in "YZ":
            z |= 1 << q
        ny += p == "Y"
    return x, z, ny


def format_string(paulis: PauliString) -> str:
    return " ".join(f"{p}{q}" for q, p in paulis) or "I"


@dataclass(frozen=True)
class PauliTerm:
    coefficient: complex
    paulis: PauliString
    n_qubits: int

    def __post_init__(self):
        seen = set()
        for q, p in self.paulis:
            if not 0 <= q < self.n_qubits:
                raise ValueError(f"qubit {q} out of range for {self.n_qubits} qubits")
            if q in seen:
                raise ValueError(f"duplicate qubit {q} in Pauli string")
            if p not in ("X", "Y", "Z"):
                raise ValueError(f"unknown Pauli letter {p!r}")
            seen.add(q)
        object.__setattr__(self, "paulis", tuple(sorted(self.paulis)))

    @classmethod
    def from_label(cls, label: str, n_qubits: int, coefficient: complex = 1.0) -> "PauliTerm":
        """``"X0 Y1 Z3"`` style label."""
        paulis = tuple((int(tok[1:]), tok[0].upper()) for tok in label.split())
        return cls(coefficient, paulis, n_qubits)

    @property
    def weight(self) -> int:
        return len(self.paulis)

    def __str__(self):
        return f"{self.coefficient:.6g} {format_string(self.paulis)}"


@dataclass
class QubitOperator:
    """Sum of Pauli strings; coefficients below ``MERGE_EPS`` are dropped."""

    n_qubits: int
    terms: Dict[PauliString, complex] = field(default_factory=dict)

    def __post_init__(self):
        raw, self.terms = self.terms, {}
        for k, v in raw.items():
            self.add(tuple(sorted(k)), v)

    def add(self, paulis: PauliString, coeff: complex):
        total = self.terms.get(paulis, 0.0) + coeff
        if abs(total) < MERGE_EPS:
            self.terms.pop(paulis, None)
        else:
            self.terms[paulis] = total

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> "QubitOperator":
        return cls(n_qubits, {(): coeff})

    def __add__(self, other: "QubitOperator") -> "QubitOperator":
        out = QubitOperator(max(self.n_qubits, other.n_qubits), dict(self.terms))
        for k, v in other.terms.items():
            out.add(k, v)
        return out

    def __mul__(self, other):
        if isinstance(other, QubitOperator):
            out = QubitOperator(max(self.n_qubits, other.n_qubits))
            for ka, va in self.terms.items():
                for kb, vb in other.terms.items():
                    ph, k = multiply_strings(ka, kb)
                    out.add(k, ph * va * vb)
            return out
        return QubitOperator(self.n_qubits, {k: v * other for k, v in self.terms.items()})

    def __rmul__(self, scalar):
        return self * scalar

    def __sub__(self, other):
        return self + other * -1.0

    def __len__(self):
        return len(self.terms)

    def pauli_terms(self) -> list[PauliTerm]:
        return [PauliTerm(v, k, self.n_qubits) for k, v in self.terms.items()]

    def is_hermitian(self, tol: float = MERGE_EPS) -> bool:
        return all(abs(np.imag(v)) < tol for v in self.terms.values())

    def real(self) -> "QubitOperator":
        """Drop imaginary residue; only valid for Hermitian operators."""
        return QubitOperator(self.n_qubits, {k: float(np.real(v)) for k, v in self.terms.items()})

    def to_sparse(self) -> sparse.csr_matrix:
        dim = 1 << self.n_qubits
        idx = np.arange(dim, dtype=np.int64)
        out = sparse.csr_matrix((dim, dim), dtype=complex)
        rows, cols, vals = [], [], []
        for paulis, coeff in self.terms.items():
            x, z, ny = string_masks(paulis)
            phase = coeff * (1j) ** ny * parity_sign(idx & z)
            rows.append(idx ^ x)
            cols.append(idx)
            vals.append(phase)
        if rows:
            out = sparse.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
            )
        return out

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def __str__(self):
        return "\n".join(f"{v:+.10g} {format_string(k)}" for k, v in sorted(self.terms.items())) or "0"


def _ladder_image(p: int, creation: bool, n_qubits: int) -> QubitOperator:
    chain = tuple((q, "Z") for q in range(p))
    sign = -0.5j if creation else 0.5j
    return QubitOperator(n_qubits, {chain + ((p, "X"),): 0.5, chain + ((p, "Y"),): sign})


def jordan_wigner(op: FermionOperator, n_qubits: int | None = None) -> QubitOperator:
    """Map with a_p -> Z_0 ... Z_{p-1} (X_p + i Y_p) / 2."""
    if n_qubits is None:
        n_qubits = op.max_index() + 1
    cache: Dict[Tuple[int, bool], QubitOperator] = {}
    out = QubitOperator(n_qubits)
    for ladder, coeff in op.terms.items():
        acc = QubitOperator.identity(n_qubits, coeff)
        for factor in ladder:
            if factor not in cache:
                cache[factor] = _ladder_image(*factor, n_qubits)
            acc = acc * cache[factor]
        for k, v in acc.terms.items():
            out.add(k, v)
    return out


def qubit_hamiltonian(ints) -> QubitOperator:
    """Real-coefficient JW image of the molecular Hamiltonian."""
    from .fermion import second_quantized_hamiltonian

    op = jordan_wigner(second_quantized_hamiltonian(ints), ints.n_spin_orbitals)
    if not op.is_hermitian():
        worst = max(abs(np.imag(v)) for v in op.terms.values())
        raise ArithmeticError(f"Hamiltonian has imaginary coefficient residue {worst:.3e}")
    return op.real()


def commute(a: PauliString, b: PauliString) -> bool:
    anti = sum(1 for q, p in a for r, s in b if q == r and p != s)
    return anti % 2 == 0


def sector_matrix(op: QubitOperator, determinants: Iterable[int]) -> np.ndarray:
    """Dense matrix of ``op`` restricted to the given computational basis states."""
    dets = np.fromiter(determinants, dtype=np.int64)
    M = op.to_sparse()[dets][:, dets]
    return M.toarray()
