"""Command-line front end.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path
from typing import List, Sequence

from . import experiments as ex
from .config import ConfigError, RunConfig, load, parse_hubbard
from .fermion import FCIDumpError, build_hubbard, read_fcidump
from .qsci import LanczosNotConverged, casci_reference, hartree_fock_energy, solve_subspace, select_subspace
from .trainer import NumericalFailure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("gqkae")


def _int_list(text: str) -> List[int]:
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _seeds(text: str) -> List[int]:
    """``5`` means seeds 0..4; ``3,7,11`` is an explicit list."""
    if "," in text:
        return _int_list(text)
    return list(range(int(text)))


def _prepare_dir(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise FileExistsError(f"{path} already exists; pass --force to overwrite")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(args, payload, text: str, out_dir: Path | None = None, name: str | None = None):
    if out_dir is not None and name:
        (out_dir / f"{name}.json").write_text(json.dumps(payload, indent=1))
        (out_dir / f"{name}.txt").write_text(text + "\n")
    print(json.dumps(payload, indent=1) if args.json else text)


def _config(args) -> RunConfig:
    cfg = load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "output", None):
        cfg.output = args.output
    if getattr(args, "exact", False):
        cfg.qsci.exact = True
    if getattr(args, "seeds", None):
        cfg.trainer.seeds = _seeds(args.seeds)
    if getattr(args, "iterations", None):
        cfg.trainer.n_iterations = args.iterations
    return cfg.validate()


def _run_dir(args, cfg: RunConfig, sub: str) -> Path:
    path = _prepare_dir(cfg.run_dir() / sub, args.force)
    (path / "resolved_config.toml").write_text(cfg.to_toml())
    return path


def _circuits(args, problem) -> List[dict]:
    if args.tokens:
        return [{"source": "command line", "tokens": _int_list(args.tokens)}]
    if args.run:
        return ex.load_circuits(args.run)
    raise ConfigError(["one of --tokens or --run is required"])


# -- subcommands -----------------------------------------------------------

def cmd_parse_fcidump(args) -> int:
    ints = read_fcidump(args.path)
    info = {
        "n_orbitals": ints.n_orbitals,
        "n_electrons": ints.n_electrons,
        "ms2": ints.ms2,
        "n_qubits": ints.n_spin_orbitals,
        "core_energy": ints.core_energy,
        "n_two_electron": len(ints.eri),
        "hartree_fock_energy": hartree_fock_energy(ints),
    }
    _emit(args, info, "\n".join(f"{k:>20}: {v}" for k, v in info.items()))
    return EXIT_OK


def cmd_casci(args) -> int:
    if args.hubbard:
        n, t, u = parse_hubbard(args.hubbard)
        ints = build_hubbard(n, t, u, args.electrons, args.ms2)
    else:
        if args.fcidump:
            ints = read_fcidump(args.fcidump)
        else:
            ints = _config(args).load_integrals()
        if args.electrons is not None or args.ms2 is not None:
            from dataclasses import replace
            ints = replace(ints, n_electrons=args.electrons if args.electrons is not None else ints.n_electrons,
                           ms2=args.ms2 if args.ms2 is not None else ints.ms2)
    energy = casci_reference(ints)
    _emit(args, {"casci_energy": energy, "sector": list(ints.sector)}, f"{energy:.10f}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _run_dir(args, cfg, "train")
    summary = ex.run_training(cfg, out, variant=args.variant, workers=args.workers)
    rows = [{"seed": r["seed"], "best_energy": r["best_energy"], "best_error": r["best_error"],
             "wall_seconds": r["wall_seconds"]} for r in summary["runs"]]
    text = ex.format_table(rows) + (
        f"\nbest energy {summary['best_energy_mean']:.8f} +/- {summary['best_energy_std']:.2e}"
        f"  (CASCI {summary['casci_energy']:.8f}, {summary['n_chemically_accurate']}/{len(rows)} within 1.6 mHa)")
    _emit(args, {k: v for k, v in summary.items() if k != "runs"} | {"runs": rows}, text, out, "summary")
    return EXIT_OK


def cmd_qsci_eval(args) -> int:
    cfg = _config(args)
    problem = ex.make_problem(cfg)
    out = []
    for c in _circuits(args, problem):
        record = problem.measure(c["tokens"], args.seed, n_shots=args.shots, exact=cfg.qsci.exact)
        sel = select_subspace(record, args.d_max or cfg.qsci.d_max, problem.ints.sector,
                              cfg.qsci.complete_symmetry)
        res = solve_subspace(problem.ints, sel)
        out.append({"source": c["source"], "tokens": c["tokens"], **res.to_dict(args.top),
                    "error": abs(res.energy - problem.casci_energy)})
    text = "\n".join(f"{o['source']}: E={o['energy']:.10f} dim={o['dimension']} error={o['error']:.3e}" for o in out)
    _emit(args, out, text)
    return EXIT_OK


def cmd_sweep_shots(args) -> int:
    cfg = _config(args)
    problem = ex.make_problem(cfg)
    circuits = _circuits(args, problem)
    out = _run_dir(args, cfg, "sweep_shots")
    rows = ex.sweep_shots(problem, [c["tokens"] for c in circuits], _int_list(args.shots), args.repeats,
                          args.d_max or cfg.qsci.d_max, args.seed)
    (out / "sweep_shots.csv").write_text(ex.to_csv(rows))
    payload = {"rows": rows, "circuits": circuits, "casci_energy": problem.casci_energy,
               "circuit_reuse": "one trained circuit per seed, re-measured at every shot count"}
    _emit(args, payload, ex.format_table(rows), out, "sweep_shots")
    return EXIT_OK


def cmd_sweep_dmax(args) -> int:
    cfg = _config(args)
    problem = ex.make_problem(cfg)
    circuits = _circuits(args, problem)
    out = _run_dir(args, cfg, "sweep_dmax")
    rows = []
    for c in circuits:
        for r in ex.sweep_dmax(problem, c["tokens"], _int_list(args.d_max), args.shots or cfg.qsci.n_shots,
                               args.seed, cfg.qsci.exact):
            rows.append({"source": c["source"], **r})
    (out / "sweep_dmax.csv").write_text(ex.to_csv(rows))
    _emit(args, {"rows": rows, "casci_energy": problem.casci_energy}, ex.format_table(rows), out, "sweep_dmax")
    return EXIT_OK


def cmd_report_params(args) -> int:
    cfg = _config(args)
    rep = ex.report_params(cfg)
    rows = [{"variant": v, **{k: r[k] for k in ("total", "bytes_f64", "bytes_f32")}} for v, r in rep["variants"].items()]
    text = ex.format_table(rows) + f"\nhqkan/gpt2 = {rep['ratio']:.4f}, reduction {rep['reduction_percent']:.1f}%"
    _emit(args, rep, text)
    return EXIT_OK


def cmd_report_gates(args) -> int:
    cfg = _config(args)
    problem = ex.make_problem(cfg)
    if args.tokens or args.run:
        circuits = [c["tokens"] for c in _circuits(args, problem)]
    else:
        circuits = ex.random_circuits(problem, args.samples, cfg.model.seq_len, args.seed)
    rep = ex.report_gates(problem, circuits)
    text = (f"{rep['n_circuits']} circuits: two-qubit gates {rep['two_qubit_mean']:.1f} +/- "
            f"{rep['two_qubit_std']:.1f}\n" + ex.format_table(rep["per_circuit"][:20]))
    _emit(args, rep, text)
    return EXIT_OK


def cmd_compare_variants(args) -> int:
    cfg = _config(args)
    out = _run_dir(args, cfg, "compare_variants")
    res = ex.compare_variants(cfg, out, workers=args.workers)
    text = (ex.format_table(res["final_errors"]) + "\n\n" + ex.format_table(res["resources"])
            + f"\nparameter reduction {res['parameter_reduction_percent']:.1f}%")
    _emit(args, {k: v for k, v in res.items() if k != "convergence"}, text, out, "summary")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gqkae", description="Generative KAN eigensolver toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, config=True, run_dir=False, circuits=False):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        sp.add_argument("--json", action="store_true", help="print JSON instead of a table")
        if config:
            sp.add_argument("--config", help="run configuration (TOML)")
            sp.add_argument("--exact", action="store_true", help="exact-probability scoring instead of shots")
        if run_dir:
            sp.add_argument("--output", help="run directory (relative paths resolve under $GQKAE_RUN_ROOT)")
            sp.add_argument("--force", action="store_true", help="overwrite an existing run directory")
        if circuits:
            sp.add_argument("--tokens", help="comma-separated token ids")
            sp.add_argument("--run", help="training run directory; uses each seed's best circuit")
            sp.add_argument("--seed", type=int, default=0)
        return sp

    sp = add("parse-fcidump", cmd_parse_fcidump, "summarize an FCIDUMP file", config=False)
    sp.add_argument("path")

    sp = add("casci", cmd_casci, "exact ground energy in the active space")
    sp.add_argument("--hubbard", help="n_sites,t,U")
    sp.add_argument("--fcidump")
    sp.add_argument("--electrons", type=int)
    sp.add_argument("--ms2", type=int)

    sp = add("train", cmd_train, "GRPO training over seeds", run_dir=True)
    sp.add_argument("--seeds", help="count (N -> 0..N-1) or comma list")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--variant", choices=("gpt2", "hqkan"))
    sp.add_argument("--workers", type=int, default=1)

    sp = add("qsci-eval", cmd_qsci_eval, "QSCI energy of given circuits", circuits=True)
    sp.add_argument("--shots", type=int)
    sp.add_argument("--d-max", type=int)
    sp.add_argument("--top", type=int, default=10)

    sp = add("sweep-shots", cmd_sweep_shots, "error versus measurement shots", run_dir=True, circuits=True)
    sp.add_argument("--shots", default="100,1000,10000,100000")
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--d-max", type=int)

    sp = add("sweep-dmax", cmd_sweep_dmax, "error versus subspace cap", run_dir=True, circuits=True)
    sp.add_argument("--d-max", default="1,2,4,8,16,32,64,128,256,512,1000,2000")
    sp.add_argument("--shots", type=int)

    add("report-params", cmd_report_params, "parameter counts of both FFN variants")

    sp = add("report-gates", cmd_report_gates, "gate counts of compiled circuits", circuits=True)
    sp.add_argument("--samples", type=int, default=100, help="random circuits when no tokens/run given")

    sp = add("compare-variants", cmd_compare_variants, "train gpt2 and hqkan side by side", run_dir=True)
    sp.add_argument("--seeds", help="count (N -> 0..N-1) or comma list")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--workers", type=int, default=1)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FCIDumpError, FileExistsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, LanczosNotConverged, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
