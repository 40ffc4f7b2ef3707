import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import H2_CASCI, H2_HF, H4_CASCI
from gqkae.fermion import MolecularIntegrals, build_hubbard, sector_determinants
from gqkae.qsci import (
    EmptySubspaceError,
    LanczosNotConverged,
    SectorMismatchError,
    SubspaceSelection,
    SubspaceTooLarge,
    casci_reference,
    casci_result,
    hartree_fock_determinant,
    hartree_fock_energy,
    lanczos_smallest,
    reward,
    select_subspace,
    slater_condon_element,
    slater_condon_engine,
    solve_subspace,
)
from gqkae.qubit import qubit_hamiltonian, sector_matrix
from gqkae.simulator import MeasurementRecord, Statevector, exact_distribution, expectation, prepare_reference


def record(counts):
    return MeasurementRecord(counts, sum(counts.values()))


@pytest.mark.parametrize("name", ["h2", "h4", "dimer"])
def test_slater_condon_matches_jw(name, request):
    ints = request.getfixturevalue(name)
    dets = sector_determinants(ints.n_spin_orbitals, ints.n_electrons, ints.ms2)
    sc = slater_condon_engine(ints).matrix(dets)
    jw = sector_matrix(qubit_hamiltonian(ints), dets)
    assert np.max(np.abs(sc - jw)) < 1e-10


def test_slater_condon_open_shell_matches_jw():
    ints = build_hubbard(3, 0.7, 2.5, n_electrons=3, ms2=1)
    dets = sector_determinants(6, 3, 1)
    assert np.max(np.abs(slater_condon_engine(ints).matrix(dets) - sector_matrix(qubit_hamiltonian(ints), dets))) < 1e-10


def test_hf_diagonal_matches_simulator(h2):
    hf = hartree_fock_determinant(h2)
    e = slater_condon_element(h2, hf, hf)
    psi = prepare_reference(4, h2.hartree_fock_occupation())
    assert abs(e - expectation(psi, qubit_hamiltonian(h2))) < 1e-10
    assert abs(e - H2_HF) < 1e-10


def test_triple_difference_is_zero(h4):
    assert slater_condon_element(h4, 0b00001111, 0b11100001) == 0.0


def test_sector_mismatch(h2):
    with pytest.raises(SectorMismatchError):
        slater_condon_element(h2, 0b0011, 0b0111)
    with pytest.raises(SectorMismatchError):
        slater_condon_element(h2, 0b0011, 0b0101)
    with pytest.raises(SectorMismatchError):
        solve_subspace(h2, [0b0101])


def test_hubbard_dimer_spectrum():
    t, u = 1.0, 4.0
    ints = build_hubbard(2, t, u)
    dets = sector_determinants(4, 2, 0)
    w = np.linalg.eigvalsh(slater_condon_engine(ints).matrix(dets))
    r = np.sqrt(u * u + 16 * t * t)
    assert np.allclose(w, sorted([0.0, u, (u + r) / 2, (u - r) / 2]), atol=1e-12)


def test_selection_hf_only(h2):
    hf = hartree_fock_determinant(h2)
    sel = select_subspace(record({hf: 1000}), 10, h2.sector)
    assert sel.determinants == (hf,)


def test_selection_tie_rule():
    x, y, z = 0b0011, 0b1001, 0b0110
    sel = select_subspace(record({x: 5, y: 3, z: 3}), 2, (2, 0))
    assert sel.determinants == (x, min(y, z))


def test_selection_discards_out_of_sector():
    sel = select_subspace(record({0b0101: 50, 0b0011: 1, 0b0111: 30}), 10, (2, 0))
    assert sel.determinants == (0b0011,)
    with pytest.raises(EmptySubspaceError):
        select_subspace(record({0b0101: 50}), 10, (2, 0))


def test_symmetry_completion():
    # alpha strings {0b0001, 0b0100}, beta strings {0b0010, 0b1000}
    sel = select_subspace(record({0b0011: 10, 0b1100: 4}), 10, (2, 0), complete_symmetry=True)
    assert sel.determinants[:2] == (0b0011, 0b1100)
    assert sorted(sel.determinants[2:]) == list(sel.determinants[2:]) == [0b0110, 0b1001]
    assert sel.provenance == "symmetry-completed"
    assert len(select_subspace(record({0b0011: 10, 0b1100: 4}), 3, (2, 0), True)) == 3


def test_exact_ground_state_spans_sector(h2):
    dets = sector_determinants(4, 2, 0)
    res = casci_result(h2)
    amps = np.zeros(16, dtype=complex)
    amps[list(dets)] = res.ground_vector
    rec = exact_distribution(Statevector(amps, 4))
    # singles carry no weight in the H2 ground state; completion restores them
    assert sorted(select_subspace(rec, 4, h2.sector).determinants) == [0b0011, 0b1100]
    sel = select_subspace(rec, 4, h2.sector, complete_symmetry=True)
    assert sorted(sel.determinants) == dets


def test_selection_invariants():
    with pytest.raises(ValueError):
        SubspaceSelection((1, 2, 3), 2)
    with pytest.raises(ValueError):
        SubspaceSelection((1, 1), 5)
    with pytest.raises(ValueError):
        select_subspace(record({3: 1}), 0, (2, 0))


def test_single_determinant_energy(h2):
    hf = hartree_fock_determinant(h2)
    assert solve_subspace(h2, [hf]).energy == hartree_fock_energy(h2)


def test_full_sector_energy(h2, h4):
    assert abs(casci_reference(h2) - H2_CASCI) < 1e-9
    assert abs(casci_reference(h4) - H4_CASCI) < 1e-9


def test_noninteracting_casci(rng):
    K = 4
    a = rng.standard_normal((K, K))
    h1 = 0.5 * (a + a.T)
    ints = MolecularIntegrals(K, 3, 1, 0.25, h1, {})
    eps = np.linalg.eigvalsh(h1)
    # 2 alpha and 1 beta electron fill the lowest one-body levels of each spin
    expected = 0.25 + eps[0] + eps[1] + eps[0]
    assert abs(casci_reference(ints) - expected) < 1e-9


def test_casci_dimension_cap(h4):
    with pytest.raises(SubspaceTooLarge):
        casci_reference(h4, max_dim=10)


def test_lanczos_matches_dense(rng):
    ints = build_hubbard(6, 1.0, 4.0, n_electrons=4, ms2=0)
    dets = sector_determinants(12, 4, 0)
    res = solve_subspace(ints, dets)
    dense = np.linalg.eigvalsh(slater_condon_engine(ints).matrix(dets))[0]
    assert len(dets) > 64
    assert res.iterations > 0 and res.residual < 1e-9
    assert abs(res.energy - dense) < 1e-9
    assert abs(np.linalg.norm(res.ground_vector) - 1) < 1e-10


def test_lanczos_nonconvergence_reports_residual(rng):
    a = rng.standard_normal((200, 200))
    with pytest.raises(LanczosNotConverged) as exc:
        lanczos_smallest(a + a.T, tol=1e-14, max_iter=5)
    assert exc.value.iterations == 5
    assert exc.value.residual > 0


def test_result_json(h2):
    res = casci_result(h2)
    d = res.to_dict(top_k=2)
    assert d["dimension"] == 4
    assert d["top_determinants"][0]["bits"] == hex(hartree_fock_determinant(h2))


def test_reward():
    assert reward(-1.5) == 1.5


def test_nested_monotonicity(h4, rng):
    dets = sector_determinants(8, 4, 0)
    for _ in range(5):
        order = [dets[i] for i in rng.permutation(len(dets))]
        energies = [solve_subspace(h4, order[:k]).energy for k in range(1, 11)]
        assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


@settings(max_examples=25, deadline=None)
@given(st.dictionaries(st.sampled_from(sector_determinants(8, 4, 0)), st.integers(1, 50), min_size=1, max_size=20),
       st.integers(1, 36), st.booleans())
def test_selection_deterministic_and_variational(counts, d_max, complete):
    ints = _h4()
    rec = record(counts)
    a = select_subspace(rec, d_max, (4, 0), complete)
    b = select_subspace(record(dict(reversed(list(counts.items())))), d_max, (4, 0), complete)
    assert a == b
    assert len(a) <= d_max
    e = solve_subspace(ints, a).energy
    assert e >= H4_CASCI - 1e-9
    if hartree_fock_determinant(ints) in a.determinants:
        assert e <= hartree_fock_energy(ints) + 1e-9


_CACHE = {}


def _h4():
    if "h4" not in _CACHE:
        from gqkae.fermion import read_fcidump
        from conftest import DATA

        _CACHE["h4"] = read_fcidump(str(DATA / "h4_631g.fcidump"))
    return _CACHE["h4"]
