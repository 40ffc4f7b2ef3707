"""UCCSD operator pool, token vocabulary, circuit compilation and gate counts."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import List, Sequence, Tuple

import numpy as np

from .fermion import FermionOperator
from .qubit import PauliString, commute, format_string, jordan_wigner

DEFAULT_ANGLE_GRID = tuple(s * np.pi / k for k in (2, 4, 8, 16) for s in (1, -1))

Rotation = Tuple[PauliString, float]


@dataclass(frozen=True)
class ExcitationGenerator:
    """Anti-Hermitian ``T - T^dagger`` with JW image ``i * sum_m c_m P_m``."""

    kind: str
    orbitals: Tuple[int, ...]
    generator: FermionOperator
    qubit_terms: Tuple[Tuple[PauliString, float], ...]

    @property
    def occupied(self) -> Tuple[int, ...]:
        half = len(self.orbitals) // 2
        return self.orbitals[:half]

    @property
    def virtual(self) -> Tuple[int, ...]:
        half = len(self.orbitals) // 2
        return self.orbitals[half:]

    def label(self) -> str:
        return f"{self.kind}{self.occupied}->{self.virtual}"


def _make_generator(kind: str, occ: Tuple[int, ...], virt: Tuple[int, ...], n_qubits: int) -> ExcitationGenerator:
    ladder = tuple((a, True) for a in virt) + tuple((i, False) for i in reversed(occ))
    T = FermionOperator.monomial(*ladder)
    G = T - T.dagger()
    image = jordan_wigner(G, n_qubits)
    terms = []
    for paulis, coeff in sorted(image.terms.items()):
        if abs(np.real(coeff)) > 1e-12:
            raise ArithmeticError(f"JW image of {kind}{occ}->{virt} is not anti-Hermitian")
        terms.append((paulis, float(np.imag(coeff))))
    for (a, _), (b, _) in combinations(terms, 2):
        if not commute(a, b):
            raise ArithmeticError(f"non-commuting terms {format_string(a)}, {format_string(b)}")
    return ExcitationGenerator(kind, occ + virt, G, tuple(terms))


def enumerate_uccsd(n_spatial: int, n_electrons: int, ms2: int = 0) -> List[ExcitationGenerator]:
    """Spin-conserving singles then Sz-conserving doubles from the aufbau reference."""
    if n_electrons > 2 * n_spatial:
        raise ValueError(f"{n_electrons} electrons do not fit in {n_spatial} spatial orbitals")
    n_qubits = 2 * n_spatial
    n_alpha, n_beta = (n_electrons + ms2) // 2, (n_electrons - ms2) // 2
    occ = sorted([2 * p for p in range(n_alpha)] + [2 * p + 1 for p in range(n_beta)])
    virt = [q for q in range(n_qubits) if q not in occ]

    singles = [
        _make_generator("single", (i,), (a,), n_qubits)
        for i in occ
        for a in virt
        if i % 2 == a % 2
    ]
    doubles = [
        _make_generator("double", oo, vv, n_qubits)
        for oo in combinations(occ, 2)
        for vv in combinations(virt, 2)
        if sum(q % 2 for q in oo) == sum(q % 2 for q in vv)
    ]
    return sorted(singles, key=lambda g: g.orbitals) + sorted(doubles, key=lambda g: g.orbitals)


@dataclass(frozen=True)
class Vocabulary:
    generators: Tuple[ExcitationGenerator, ...]
    angles: Tuple[float, ...]
    n_qubits: int

    @property
    def size(self) -> int:
        return len(self.generators) * len(self.angles)

    @property
    def start_token(self) -> int:
        return self.size

    def token(self, token_id: int) -> Tuple[int, float]:
        """(generator index, angle) of a token id."""
        if not 0 <= token_id < self.size:
            raise ValueError(f"token {token_id} is not an operator token (vocabulary size {self.size})")
        g, a = divmod(token_id, len(self.angles))
        return g, self.angles[a]

    def token_id(self, generator: int, angle_index: int) -> int:
        return generator * len(self.angles) + angle_index

    def describe(self, token_id: int) -> str:
        g, angle = self.token(token_id)
        return f"{self.generators[g].label()}@{angle:+.4f}"


def build_vocabulary(generators: Sequence[ExcitationGenerator], angle_grid: Sequence[float] = DEFAULT_ANGLE_GRID,
                     n_qubits: int | None = None) -> Vocabulary:
    if len(angle_grid) == 0:
        raise ValueError("angle grid is empty")
    if n_qubits is None:
        n_qubits = 1 + max((q for g in generators for q in g.orbitals), default=-1)
    return Vocabulary(tuple(generators), tuple(float(a) for a in angle_grid), n_qubits)


def compile_token(vocab: Vocabulary, token_id: int) -> List[Rotation]:
    """Rotations whose product is exactly ``exp(angle * G)``."""
    if token_id == vocab.start_token:
        raise ValueError("the start token has no circuit")
    g, theta = vocab.token(token_id)
    return [(paulis, -2.0 * theta * c) for paulis, c in vocab.generators[g].qubit_terms]


def compile_sequence(vocab: Vocabulary, tokens: Sequence[int]) -> List[Rotation]:
    """Rotations for U_{j_L} ... U_{j_1}, in application order."""
    out: List[Rotation] = []
    for t in tokens:
        out.extend(compile_token(vocab, int(t)))
    return out


@dataclass(frozen=True)
class GateCountReport:
    two_qubit: int = 0
    single_rotation: int = 0
    clifford: int = 0

    @property
    def total(self) -> int:
        return self.two_qubit + self.single_rotation + self.clifford

    def __add__(self, other: "GateCountReport") -> "GateCountReport":
        return GateCountReport(
            self.two_qubit + other.two_qubit,
            self.single_rotation + other.single_rotation,
            self.clifford + other.clifford,
        )

    def to_dict(self) -> dict:
        return {**asdict(self), "total": self.total}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def rotation_gate_count(paulis: PauliString) -> GateCountReport:
    """CX ladder down and up, one Rz, and H / S-type basis changes on X and Y letters."""
    w = len(paulis)
    if w == 0:
        return GateCountReport()
    n_xy = sum(1 for _, p in paulis if p in "XY")
    return GateCountReport(two_qubit=2 * (w - 1), single_rotation=1, clifford=2 * n_xy)


def count_gates(sequence: Sequence[int], vocab: Vocabulary) -> GateCountReport:
    report = GateCountReport()
    for paulis, _ in compile_sequence(vocab, sequence):
        report = report + rotation_gate_count(paulis)
    return report
