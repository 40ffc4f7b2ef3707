"""Quantum-selected configuration interaction on sampled determinants."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from .fermion import MolecularIntegrals, in_sector, popcount, sector_determinants, sector_dimension
from .simulator import MeasurementRecord

ALPHA_MASK = 0x5555555555555555
BETA_MASK = 0xAAAAAAAAAAAAAAAA
DENSE_MAX = 64
CASCI_MAX_DIM = 100_000


class EmptySubspaceError(ValueError):
    """No sampled determinant lies in the requested sector."""


class SectorMismatchError(ValueError):
    pass


class LanczosNotConverged(ArithmeticError):
    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"Lanczos stopped after {iterations} iterations with residual {residual:.3e}")


class SubspaceTooLarge(MemoryError):
    pass


@dataclass(frozen=True)
class SubspaceSelection:
    determinants: Tuple[int, ...]
    d_max: int
    provenance: str = "frequency-ranked"

    def __post_init__(self):
        if len(self.determinants) > self.d_max:
            raise ValueError(f"{len(self.determinants)} determinants exceed d_max={self.d_max}")
        if len(set(self.determinants)) != len(self.determinants):
            raise ValueError("duplicate determinants in selection")

    def __len__(self):
        return len(self.determinants)

    def truncate(self, d_max: int) -> "SubspaceSelection":
        return SubspaceSelection(self.determinants[:d_max], d_max, self.provenance)


@dataclass(frozen=True)
class SubspaceResult:
    energy: float
    ground_vector: np.ndarray
    determinants: Tuple[int, ...]
    iterations: int = 0
    residual: float = 0.0

    @property
    def dimension(self) -> int:
        return len(self.determinants)

    def to_dict(self, top_k: int = 10) -> dict:
        weights = np.abs(self.ground_vector) ** 2
        order = np.argsort(-weights, kind="stable")[:top_k]
        return {
            "energy": self.energy,
            "dimension": self.dimension,
            "top_determinants": [
                {"bits": hex(self.determinants[i]), "coefficient": float(self.ground_vector[i])} for i in order
            ],
        }

    def to_json(self, top_k: int = 10) -> str:
        return json.dumps(self.to_dict(top_k))


def _annihilate(bits: int, p: int) -> Tuple[int, int]:
    sign = -1 if popcount(bits & ((1 << p) - 1)) & 1 else 1
    return sign, bits & ~(1 << p)


def _create(bits: int, p: int) -> Tuple[int, int]:
    sign = -1 if popcount(bits & ((1 << p) - 1)) & 1 else 1
    return sign, bits | (1 << p)


def _set_bits(bits: int) -> list[int]:
    out = []
    q = 0
    while bits:
        if bits & 1:
            out.append(q)
        bits >>= 1
        q += 1
    return out


@dataclass
class SlaterCondon:
    """Determinant-basis matrix elements for one set of integrals (memoized)."""

    ints: MolecularIntegrals
    _cache: Dict[Tuple[int, int], float] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        K = self.ints.n_orbitals
        n = 2 * K
        spin = np.arange(n) % 2
        spatial = np.arange(n) // 2
        same = spin[:, None] == spin[None, :]
        self.h = np.where(same, self.ints.h1[np.ix_(spatial, spatial)], 0.0)
        g = self.ints.eri_tensor()
        # <PQ|RS> = (pr|qs) delta(sP, sR) delta(sQ, sS)
        coul = g[np.ix_(spatial, spatial, spatial, spatial)].transpose(0, 2, 1, 3)
        mask = same[:, None, :, None] & same[None, :, None, :]
        phys = np.where(mask, coul, 0.0)
        self.anti = phys - phys.transpose(0, 1, 3, 2)

    def element(self, bra: int, ket: int) -> float:
        key = (bra, ket) if bra <= ket else (ket, bra)
        value = self._cache.get(key)
        if value is None:
            value = self._compute(*key)
            self._cache[key] = value
        return value

    def _compute(self, bra: int, ket: int) -> float:
        diff = bra ^ ket
        n_diff = popcount(diff)
        if n_diff == 0:
            occ = _set_bits(ket)
            h = self.h[occ, occ].sum()
            two = self.anti[np.ix_(occ, occ, occ, occ)]
            j = np.einsum("pqpq->", two)
            return float(self.ints.core_energy + h + 0.5 * j)
        if n_diff == 2:
            (m,) = _set_bits(ket & diff)
            (p,) = _set_bits(bra & diff)
            s1, b = _annihilate(ket, m)
            s2, b = _create(b, p)
            others = _set_bits(ket & ~(1 << m))
            value = self.h[p, m] + self.anti[p, others, m, others].sum()
            return float(s1 * s2 * value)
        if n_diff == 4:
            m, n = _set_bits(ket & diff)
            p, q = _set_bits(bra & diff)
            s1, b = _annihilate(ket, m)
            s2, b = _annihilate(b, n)
            s3, b = _create(b, q)
            s4, b = _create(b, p)
            return float(s1 * s2 * s3 * s4 * self.anti[p, q, m, n])
        return 0.0

    def matrix(self, determinants: Sequence[int]) -> np.ndarray:
        dets = np.asarray(determinants, dtype=np.int64)
        d = len(dets)
        H = np.zeros((d, d))
        close = np.bitwise_count(dets[:, None] ^ dets[None, :]) <= 4
        for a, b in zip(*np.nonzero(np.triu(close))):
            H[a, b] = H[b, a] = self.element(int(dets[a]), int(dets[b]))
        return H


_ENGINES: Dict[int, SlaterCondon] = {}


def slater_condon_engine(ints: MolecularIntegrals) -> SlaterCondon:
    engine = _ENGINES.get(id(ints))
    if engine is None or engine.ints is not ints:
        engine = SlaterCondon(ints)
        _ENGINES[id(ints)] = engine
    return engine


def _check_sector(ints: MolecularIntegrals, det: int):
    if not in_sector(det, ints.n_electrons, ints.ms2):
        raise SectorMismatchError(f"determinant {det:#x} is outside sector {ints.sector}")


def slater_condon_element(ints: MolecularIntegrals, bra: int, ket: int) -> float:
    if popcount(bra) != popcount(ket) or popcount(bra & ALPHA_MASK) != popcount(ket & ALPHA_MASK):
        raise SectorMismatchError(f"determinants {bra:#x} and {ket:#x} lie in different sectors")
    return slater_condon_engine(ints).element(bra, ket)


def select_subspace(record: MeasurementRecord, d_max: int, sector: Tuple[int, int],
                    complete_symmetry: bool = False) -> SubspaceSelection:
    """Frequency-ranked in-sector determinants, optionally alpha x beta completed."""
    if d_max < 1:
        raise ValueError(f"d_max must be >= 1, got {d_max}")
    n_electrons, ms2 = sector
    kept = [(det, w) for det, w in record.counts.items() if w > 0 and in_sector(det, n_electrons, ms2)]
    if not kept:
        raise EmptySubspaceError(f"no sampled determinant in sector {sector}")
    kept.sort(key=lambda dw: (-dw[1], dw[0]))
    ranked = [det for det, _ in kept]
    provenance = "frequency-ranked"
    if complete_symmetry:
        alphas = sorted({det & ALPHA_MASK for det in ranked})
        betas = sorted({det & BETA_MASK for det in ranked})
        seen = set(ranked)
        extra = sorted(a | b for a in alphas for b in betas if (a | b) not in seen)
        if extra:
            ranked.extend(extra)
            provenance = "symmetry-completed"
    return SubspaceSelection(tuple(ranked[:d_max]), d_max, provenance)


def lanczos_smallest(H: np.ndarray, tol: float = 1e-9, max_iter: int = 500,
                     seed: int = 0) -> Tuple[float, np.ndarray, int, float]:
    """Smallest eigenpair of a symmetric matrix by Lanczos with full reorthogonalization.

    Returns (eigenvalue, unit eigenvector, iterations, residual norm).
    """
    d = H.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    V = np.zeros((min(max_iter, d) + 1, d))
    V[0] = v
    alphas, betas = [], []
    best = (np.inf, None, np.inf)
    for k in range(min(max_iter, d)):
        w = H @ V[k]
        a = V[k] @ w
        alphas.append(a)
        w -= V[: k + 1].T @ (V[: k + 1] @ w)
        w -= V[: k + 1].T @ (V[: k + 1] @ w)
        b = np.linalg.norm(w)
        T = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        evals, evecs = np.linalg.eigh(T)
        y = evecs[:, 0]
        x = V[: k + 1].T @ y
        x /= np.linalg.norm(x)
        residual = np.linalg.norm(H @ x - evals[0] * x)
        if residual < best[2]:
            best = (evals[0], x, residual)
        if residual < tol or b < 1e-14:
            return float(evals[0]), x, k + 1, float(residual)
        betas.append(b)
        V[k + 1] = w / b
    raise LanczosNotConverged(float(best[2]), min(max_iter, d))


def solve_subspace(ints: MolecularIntegrals, selection: SubspaceSelection | Sequence[int],
                   dense_max: int = DENSE_MAX, tol: float = 1e-9, max_iter: int = 500) -> SubspaceResult:
    dets = tuple(selection.determinants if isinstance(selection, SubspaceSelection) else selection)
    if not dets:
        raise EmptySubspaceError("cannot solve an empty subspace")
    for det in dets:
        _check_sector(ints, det)
    H = slater_condon_engine(ints).matrix(dets)
    if len(dets) <= dense_max:
        evals, evecs = np.linalg.eigh(H)
        vec = evecs[:, 0]
        return SubspaceResult(float(evals[0]), vec / np.linalg.norm(vec), dets)
    energy, vec, iters, residual = lanczos_smallest(H, tol=tol, max_iter=max_iter)
    return SubspaceResult(energy, vec, dets, iterations=iters, residual=residual)


def casci_reference(ints: MolecularIntegrals, sector: Tuple[int, int] | None = None,
                    max_dim: int = CASCI_MAX_DIM) -> float:
    return casci_result(ints, sector, max_dim).energy


def casci_result(ints: MolecularIntegrals, sector: Tuple[int, int] | None = None,
                 max_dim: int = CASCI_MAX_DIM) -> SubspaceResult:
    n_electrons, ms2 = sector or ints.sector
    if (n_electrons, ms2) != ints.sector:
        raise SectorMismatchError(f"sector {(n_electrons, ms2)} differs from the integrals' {ints.sector}")
    dim = sector_dimension(ints.n_orbitals, n_electrons, ms2)
    if dim > max_dim:
        raise SubspaceTooLarge(f"sector dimension {dim} exceeds the cap of {max_dim}")
    dets = sector_determinants(ints.n_spin_orbitals, n_electrons, ms2)
    try:
        return solve_subspace(ints, dets)
    except LanczosNotConverged:
        if dim > 4096:
            raise
        return solve_subspace(ints, dets, dense_max=dim)


def hartree_fock_determinant(ints: MolecularIntegrals) -> int:
    bits = 0
    for q in ints.hartree_fock_occupation():
        bits |= 1 << q
    return bits


def hartree_fock_energy(ints: MolecularIntegrals) -> float:
    det = hartree_fock_determinant(ints)
    return slater_condon_engine(ints).element(det, det)


def reward(result: SubspaceResult | float) -> float:
    energy = result.energy if isinstance(result, SubspaceResult) else float(result)
    return -energy
