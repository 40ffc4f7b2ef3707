"""Molecular integrals, FCIDUMP I/O and second-quantized Hamiltonians.

Spin orbitals are interleaved: spatial orbital ``p`` with spin ``s`` (0 for
alpha, 1 for beta) is spin orbital ``2 * p + s``. Spin orbital ``q`` is
qubit ``q`` after the Jordan-Wigner mapping.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, Mapping, Tuple

import numpy as np

EriIndex = Tuple[int, int, int, int]

CONSISTENCY_TOL = 1e-10
MERGE_EPS = 1e-12


class FCIDumpError(ValueError):
    """Malformed FCIDUMP content."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IntegralConsistencyError(FCIDumpError):
    """Two entries for the same integral disagree."""


def _canonical_eri(i: int, j: int, k: int, l: int) -> EriIndex:
    ij = (i, j) if i >= j else (j, i)
    kl = (k, l) if k >= l else (l, k)
    return ij + kl if ij >= kl else kl + ij


@dataclass(frozen=True)
class MolecularIntegrals:
    """Active-space integrals in chemist notation, all in Hartree.

    ``eri`` stores one representative per 8-fold permutation class; use
    :meth:`eri_value` or :meth:`eri_tensor` to read it.
    """

    n_orbitals: int
    n_electrons: int
    ms2: int
    core_energy: float
    h1: np.ndarray
    eri: Mapping[EriIndex, float] = field(default_factory=dict)

    def __post_init__(self):
        h1 = np.asarray(self.h1, dtype=float)
        if h1.shape != (self.n_orbitals, self.n_orbitals):
            raise ValueError(f"h1 has shape {h1.shape}, expected {(self.n_orbitals,) * 2}")
        if not np.allclose(h1, h1.T, atol=CONSISTENCY_TOL):
            raise ValueError("h1 is not symmetric")
        if not 0 < self.n_electrons <= 2 * self.n_orbitals:
            raise ValueError(f"n_electrons={self.n_electrons} outside (0, {2 * self.n_orbitals}]")
        if abs(self.ms2) > self.n_electrons or (self.n_electrons - self.ms2) % 2:
            raise ValueError(f"ms2={self.ms2} incompatible with {self.n_electrons} electrons")
        h1.setflags(write=False)
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "eri", {_canonical_eri(*k): float(v) for k, v in self.eri.items()})

    @property
    def n_spin_orbitals(self) -> int:
        return 2 * self.n_orbitals

    @property
    def n_alpha(self) -> int:
        return (self.n_electrons + self.ms2) // 2

    @property
    def n_beta(self) -> int:
        return (self.n_electrons - self.ms2) // 2

    @property
    def sector(self) -> Tuple[int, int]:
        return (self.n_electrons, self.ms2)

    def eri_value(self, i: int, j: int, k: int, l: int) -> float:
        """(ij|kl) with 0-based indices."""
        return self.eri.get(_canonical_eri(i, j, k, l), 0.0)

    def eri_tensor(self) -> np.ndarray:
        cached = self.__dict__.get("_eri_tensor")
        if cached is not None:
            return cached
        K = self.n_orbitals
        g = np.zeros((K, K, K, K))
        for (i, j, k, l), v in self.eri.items():
            for a, b, c, d in _eri_permutations(i, j, k, l):
                g[a, b, c, d] = v
        g.setflags(write=False)
        object.__setattr__(self, "_eri_tensor", g)
        return g

    def hartree_fock_occupation(self) -> Tuple[int, ...]:
        """Spin orbitals of the aufbau determinant: lowest alpha and beta orbitals."""
        alpha = [2 * p for p in range(self.n_alpha)]
        beta = [2 * p + 1 for p in range(self.n_beta)]
        return tuple(sorted(alpha + beta))


def _eri_permutations(i, j, k, l) -> Iterator[EriIndex]:
    yield from {
        (i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
        (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i),
    }


_NAMELIST_KEY = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^=]*?)(?=,?\s*[A-Za-z_][A-Za-z0-9_]*\s*=|$)")


def _parse_namelist(text: str, first_line: int) -> Dict[str, str]:
    body = text.strip()
    body = re.sub(r"^&FCI", "", body, flags=re.IGNORECASE)
    body = re.sub(r"(&END|/)\s*$", "", body.strip(), flags=re.IGNORECASE)
    values = {}
    for key, raw in _NAMELIST_KEY.findall(body.replace("\n", " ")):
        values[key.upper()] = raw.strip().rstrip(",")
    for required in ("NORB", "NELEC"):
        if required not in values:
            raise FCIDumpError(f"namelist is missing {required}", first_line)
    return values


def _looks_numeric(line: str) -> bool:
    head = line.split(maxsplit=1)[0] if line else ""
    try:
        float(head.replace("D", "E"))
    except ValueError:
        return False
    return True


def parse_fcidump(text: str | Iterable[str]) -> MolecularIntegrals:
    """Parse FCIDUMP text (Molpro format, 1-based indices).

    ORBSYM and ISYM are read but ignored.
    """
    if not isinstance(text, str):
        text = "".join(text)
    lines = text.splitlines()
    if not lines or not lines[0].strip().upper().startswith("&FCI"):
        raise FCIDumpError("expected '&FCI' namelist at start of file", 1)

    end = None
    for n, line in enumerate(lines):
        stripped = line.strip().upper()
        if "&END" in stripped or stripped.endswith("/"):
            end = n
            break
        if n > 0 and _looks_numeric(stripped):
            # namelist without an explicit terminator
            end = n - 1
            break
    if end is None:
        raise FCIDumpError("unterminated &FCI namelist", len(lines))
    header = _parse_namelist("\n".join(lines[: end + 1]), 1)
    try:
        norb = int(header["NORB"])
        nelec = int(header["NELEC"])
        ms2 = int(header.get("MS2", "0"))
    except ValueError as exc:
        raise FCIDumpError(f"bad integer in namelist: {exc}", 1) from None
    if norb < 1:
        raise FCIDumpError(f"NORB must be positive, got {norb}", 1)

    h1 = np.zeros((norb, norb))
    h1_seen = np.zeros((norb, norb), dtype=bool)
    eri: Dict[EriIndex, float] = {}
    core = None

    def check(old, new, lineno, what):
        if abs(old - new) > CONSISTENCY_TOL:
            raise IntegralConsistencyError(f"conflicting values for {what}: {old!r} vs {new!r}", lineno)

    for lineno, line in enumerate(lines[end + 1 :], start=end + 2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise FCIDumpError(f"expected 'value i j k l', got {line.strip()!r}", lineno)
        try:
            value = float(parts[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(p) for p in parts[1:])
        except ValueError:
            raise FCIDumpError(f"cannot parse {line.strip()!r}", lineno) from None
        if not all(0 <= x <= norb for x in (i, j, k, l)):
            raise FCIDumpError(f"index out of range [0, {norb}] in {line.strip()!r}", lineno)

        if i == j == k == l == 0:
            if core is not None:
                check(core, value, lineno, "core energy")
            core = value
        elif k == 0 and l == 0:
            if i == 0 or j == 0:
                # orbital energies (i 0 0 0) are informational only
                continue
            a, b = i - 1, j - 1
            if h1_seen[a, b]:
                check(h1[a, b], value, lineno, f"h1[{i},{j}]")
            h1[a, b] = h1[b, a] = value
            h1_seen[a, b] = h1_seen[b, a] = True
        elif 0 in (i, j, k, l):
            raise FCIDumpError(f"zero index inside two-electron entry {line.strip()!r}", lineno)
        else:
            key = _canonical_eri(i - 1, j - 1, k - 1, l - 1)
            if key in eri:
                check(eri[key], value, lineno, f"({i}{j}|{k}{l})")
            eri[key] = value

    return MolecularIntegrals(
        n_orbitals=norb,
        n_electrons=nelec,
        ms2=ms2,
        core_energy=0.0 if core is None else core,
        h1=h1,
        eri={k: v for k, v in eri.items() if v != 0.0},
    )


def read_fcidump(path: str | Path) -> MolecularIntegrals:
    return parse_fcidump(Path(path).read_text())


def write_fcidump(ints: MolecularIntegrals, tol: float = 0.0) -> str:
    """Serialize to FCIDUMP text with ``%.16E`` values and 1-based indices."""
    K = ints.n_orbitals
    out = [
        f" &FCI NORB={K},NELEC={ints.n_electrons},MS2={ints.ms2},",
        "  ORBSYM=" + ",".join("1" for _ in range(K)) + ",",
        "  ISYM=1,",
        " &END",
    ]
    for (i, j, k, l), v in sorted(ints.eri.items()):
        if abs(v) > tol:
            out.append(f"{v:.16E} {i + 1:4d} {j + 1:4d} {k + 1:4d} {l + 1:4d}")
    for i in range(K):
        for j in range(i + 1):
            v = ints.h1[i, j]
            if abs(v) > tol:
                out.append(f"{v:.16E} {i + 1:4d} {j + 1:4d}    0    0")
    out.append(f"{ints.core_energy:.16E}    0    0    0    0")
    return "\n".join(out) + "\n"


def build_hubbard(n_sites: int, t: float, u: float, n_electrons: int | None = None,
                  ms2: int | None = None) -> MolecularIntegrals:
    """Open-boundary 1D Hubbard chain in site basis; defaults to half filling, lowest |Sz|."""
    if n_sites < 2:
        raise ValueError(f"n_sites must be >= 2, got {n_sites}")
    if n_electrons is None:
        n_electrons = n_sites
    if ms2 is None:
        ms2 = n_electrons % 2
    h1 = np.zeros((n_sites, n_sites))
    for i in range(n_sites - 1):
        h1[i, i + 1] = h1[i + 1, i] = -t
    eri = {(i, i, i, i): float(u) for i in range(n_sites)} if u != 0 else {}
    return MolecularIntegrals(
        n_orbitals=n_sites,
        n_electrons=n_electrons,
        ms2=ms2,
        core_energy=0.0,
        h1=h1,
        eri=eri,
    )


# (spin_orbital, is_creation) ladder factors, applied right to left
Ladder = Tuple[Tuple[int, bool], ...]


class FermionOperator:
    """Linear combination of normal-ordered-as-written ladder monomials."""

    def __init__(self, terms: Mapping[Ladder, complex] | None = None):
        self.terms: Dict[Ladder, complex] = {}
        for k, v in (terms or {}).items():
            self._add(tuple(k), v)

    def _add(self, key: Ladder, coeff: complex):
        total = self.terms.get(key, 0.0) + coeff
        if abs(total) < MERGE_EPS:
            self.terms.pop(key, None)
        else:
            self.terms[key] = total

    @classmethod
    def monomial(cls, *factors: Tuple[int, bool], coeff: complex = 1.0) -> "FermionOperator":
        return cls({tuple(factors): coeff})

    def __add__(self, other: "FermionOperator") -> "FermionOperator":
        out = FermionOperator(self.terms)
        for k, v in other.terms.items():
            out._add(k, v)
        return out

    def __sub__(self, other: "FermionOperator") -> "FermionOperator":
        return self + other * -1.0

    def __mul__(self, scalar: complex) -> "FermionOperator":
        return FermionOperator({k: v * scalar for k, v in self.terms.items()})

    __rmul__ = __mul__

    def dagger(self) -> "FermionOperator":
        return FermionOperator(
            {tuple((p, not c) for p, c in reversed(k)): np.conj(v) for k, v in self.terms.items()}
        )

    def max_index(self) -> int:
        return max((p for k in self.terms for p, _ in k), default=-1)

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        def fmt(k):
            return " ".join(f"a{'+' if c else ''}_{p}" for p, c in k) or "I"

        return " + ".join(f"({v:.6g}) {fmt(k)}" for k, v in self.terms.items()) or "0"


def second_quantized_hamiltonian(ints: MolecularIntegrals, tol: float = 0.0) -> FermionOperator:
    """E_core + sum h_pq a+_p a_q + 1/2 sum (pq|rs) a+_p a+_r a_s a_q over spins."""
    K = ints.n_orbitals
    H = FermionOperator()
    if ints.core_energy:
        H._add((), ints.core_energy)
    for p in range(K):
        for q in range(K):
            v = ints.h1[p, q]
            if abs(v) <= tol or v == 0.0:
                continue
            for s in (0, 1):
                H._add(((2 * p + s, True), (2 * q + s, False)), v)
    g = ints.eri_tensor()
    for p, q, r, s in zip(*np.nonzero(np.abs(g) > tol)):
        v = 0.5 * g[p, q, r, s]
        for sig in (0, 1):
            for tau in (0, 1):
                P, Q, R, S = 2 * p + sig, 2 * q + sig, 2 * r + tau, 2 * s + tau
                if P == R or Q == S:
                    continue
                H._add(((P, True), (R, True), (S, False), (Q, False)), v)
    return H


def number_operator(n_spin_orbitals: int) -> FermionOperator:
    return FermionOperator({((p, True), (p, False)): 1.0 for p in range(n_spin_orbitals)})


def popcount(x: int) -> int:
    return bin(x).count("1")


def occupation_to_bits(occupied: Iterable[int]) -> int:
    bits = 0
    for q in occupied:
        bits |= 1 << q
    return bits


def alpha_beta_counts(bits: int) -> Tuple[int, int]:
    alpha = popcount(bits & 0x5555555555555555)
    return alpha, popcount(bits) - alpha


def in_sector(bits: int, n_electrons: int, ms2: int) -> bool:
    a, b = alpha_beta_counts(bits)
    return a + b == n_electrons and a - b == ms2


def sector_determinants(n_spin_orbitals: int, n_electrons: int, ms2: int) -> list[int]:
    """All determinants of a sector in ascending bit value."""
    from itertools import combinations

    K = n_spin_orbitals // 2
    na, nb = (n_electrons + ms2) // 2, (n_electrons - ms2) // 2
    dets = []
    for occ_a in combinations(range(K), na):
        for occ_b in combinations(range(K), nb):
            dets.append(occupation_to_bits([2 * p for p in occ_a] + [2 * p + 1 for p in occ_b]))
    return sorted(dets)


def sector_dimension(n_orbitals: int, n_electrons: int, ms2: int) -> int:
    na, nb = (n_electrons + ms2) // 2, (n_electrons - ms2) // 2
    return math.comb(n_orbitals, na) * math.comb(n_orbitals, nb)
