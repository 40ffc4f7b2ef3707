"""Regenerate the bundled FCIDUMP fixtures (requires pyscf; not a runtime dependency)."""
from pathlib import Path

from pyscf import gto, mcscf, scf
from pyscf.tools import fcidump

OUT = Path(__file__).resolve().parents[1] / "src" / "gqkae" / "data"


def dump(name, atom, basis, ncas, nelecas):
    mol = gto.M(atom=atom, basis=basis, unit="Angstrom", verbose=0)
    mf = scf.RHF(mol).run()
    mc = mcscf.CASCI(mf, ncas, nelecas)
    h1, ecore = mc.get_h1eff()
    eri = mc.get_h2eff()
    fcidump.from_integrals(str(OUT / name), h1, eri, ncas, nelecas, ecore, ms=0, tol=1e-12)
    e_casci = mc.kernel()[0]
    print(f"{name}: E_HF={mf.e_tot!r} E_CASCI={e_casci!r} E_nuc={mol.energy_nuc()!r}")


if __name__ == "__main__":
    dump("h2_sto3g.fcidump", "H 0 0 0; H 0 0 0.74", "sto-3g", 2, 2)
    dump("h4_631g.fcidump", "; ".join(f"H 0 0 {0.88 * i:.2f}" for i in range(4)), "6-31g", 4, 4)
