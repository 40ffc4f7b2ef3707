"""Experiment drivers: multi-seed training, shot and d_max sweeps, resource reports.

Every driver returns plain dicts/lists so the caller can emit them both as
text tables and as JSON/CSV.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .config import RunConfig
from .model import FFN_VARIANTS, parameter_report
from .pool import GateCountReport, count_gates
from .qsci import select_subspace, solve_subspace
from .trainer import Problem, train

CHEMICAL_ACCURACY = 1.6e-3
DEFAULT_SHOTS = (100, 1_000, 10_000, 100_000)


def make_problem(cfg: RunConfig) -> Problem:
    return Problem(cfg.load_integrals(), cfg.angles, cfg.qsci_config())


def _train_one(cfg_dict: dict, base_dir: str, seed: int, variant: str, out_dir: str) -> dict:
    from .config import config_from_dict

    cfg = config_from_dict(cfg_dict, base_dir)
    problem = make_problem(cfg)
    t0 = time.monotonic()
    result = train(problem, cfg.model_config(problem.vocab.size, variant), cfg.trainer_config(), seed=seed,
                   out_dir=out_dir)
    return {
        "seed": seed,
        "variant": variant,
        "best_energy": result.best_energy,
        "best_error": result.best_error,
        "best_tokens": list(result.best_tokens),
        "best_curve": [m["best_energy"] for m in result.metrics],
        "wall_seconds": time.monotonic() - t0,
        "sandwich_checks": problem.sandwich_checks,
        "casci_energy": problem.casci_energy,
        "hf_energy": problem.hf_energy,
    }


def run_training(cfg: RunConfig, out_dir: str | Path, seeds: Sequence[int] | None = None,
                 variant: str | None = None, workers: int = 1) -> dict:
    """Train one policy per seed; seeds are independent and may run in worker processes."""
    out_dir = Path(out_dir)
    seeds = list(cfg.trainer.seeds if seeds is None else seeds)
    variant = variant or cfg.model.variant
    jobs = [(cfg.to_dict(), cfg.base_dir, s, variant, str(out_dir / f"{variant}_seed{s}")) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_train_one, *zip(*jobs)))
    else:
        runs = [_train_one(*job) for job in jobs]
    energies = np.array([r["best_energy"] for r in runs])
    errors = np.array([r["best_error"] for r in runs])
    summary = {
        "variant": variant,
        "seeds": seeds,
        "casci_energy": runs[0]["casci_energy"],
        "hf_energy": runs[0]["hf_energy"],
        "best_energy_mean": float(energies.mean()),
        "best_energy_std": float(energies.std()),
        "best_error_mean": float(errors.mean()),
        "best_error_std": float(errors.std()),
        "n_chemically_accurate": int((errors <= CHEMICAL_ACCURACY).sum()),
        "runs": runs,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"summary_{variant}.json").write_text(json.dumps(summary, indent=1))
    return summary


def load_circuits(run_dir: str | Path) -> List[dict]:
    """Best circuit of each seed of a finished training run (one per seed)."""
    out = []
    for path in sorted(Path(run_dir).glob("*/summary.json")):
        data = json.loads(path.read_text())
        out.append({"source": str(path.parent), "seed": data["seed"], "tokens": data["best_tokens"]})
    if not out:
        raise FileNotFoundError(f"no trained seeds found under {run_dir}")
    return out


def sweep_shots(problem: Problem, circuits: Sequence[Sequence[int]], shots: Sequence[int] = DEFAULT_SHOTS,
                repeats: int = 5, d_max: int | None = None, seed: int = 0) -> List[dict]:
    """|E_QSCI - E_CASCI| per shot count, pooled over circuits and repeats, plus an exact row."""
    ss = np.random.SeedSequence(seed)
    rows = []
    for n in shots:
        errs = []
        for tokens in circuits:
            for child in ss.spawn(repeats):
                record = problem.measure(tokens, np.random.default_rng(child), n_shots=int(n), exact=False)
                energy, _ = problem.evaluate_record(record, d_max)
                errs.append(abs(energy - problem.casci_energy))
        rows.append(_error_row(str(int(n)), errs))
    errs = []
    for tokens in circuits:
        energy, _ = problem.evaluate_record(problem.measure(tokens, exact=True), d_max)
        errs.append(abs(energy - problem.casci_energy))
    rows.append(_error_row("exact", errs))
    return rows


def _error_row(label: str, errors: Sequence[float]) -> dict:
    e = np.asarray(errors, dtype=float)
    return {"shots": label, "mean_error": float(e.mean()), "std_error": float(e.std()), "errors": e.tolist()}


def sweep_dmax(problem: Problem, tokens: Sequence[int], d_max_list: Sequence[int], n_shots: int | None = None,
               seed: int = 0, exact: bool = False) -> List[dict]:
    """Errors for nested truncations of a single measurement record (no resampling)."""
    caps = sorted(int(d) for d in d_max_list)
    record = problem.measure(tokens, np.random.default_rng(seed), n_shots=n_shots, exact=exact)
    full = select_subspace(record, caps[-1], problem.ints.sector, problem.qsci.complete_symmetry)
    rows = []
    for cap in caps:
        sel = full.truncate(cap)
        energy = solve_subspace(problem.ints, sel).energy
        rows.append({"d_max": cap, "dimension": len(sel), "energy": energy,
                     "error": abs(energy - problem.casci_energy)})
    return rows


def report_params(cfg: RunConfig, n_tokens: int | None = None) -> dict:
    n_tokens = cfg.model.n_tokens or n_tokens
    if n_tokens is None:
        n_tokens = make_problem(cfg).vocab.size
    reports = {v: parameter_report(cfg.model_config(n_tokens, v)) for v in FFN_VARIANTS}
    gpt2, hqkan = reports["gpt2"].total, reports["hqkan"].total
    return {
        "n_tokens": n_tokens,
        "variants": {v: r.to_dict() for v, r in reports.items()},
        "ratio": hqkan / gpt2,
        "reduction_percent": 100.0 * (1.0 - hqkan / gpt2),
    }


def report_gates(problem: Problem, circuits: Sequence[Sequence[int]]) -> dict:
    counts = [count_gates(c, problem.vocab) for c in circuits]
    two = np.array([c.two_qubit for c in counts], dtype=float)
    total = sum(counts, GateCountReport())
    return {
        "n_circuits": len(counts),
        "two_qubit_mean": float(two.mean()),
        "two_qubit_std": float(two.std()),
        "per_circuit": [c.to_dict() for c in counts],
        "totals": total.to_dict(),
    }


def random_circuits(problem: Problem, n: int, length: int, seed: int = 0) -> List[List[int]]:
    rng = np.random.default_rng(seed)
    return rng.integers(0, problem.vocab.size, size=(n, length)).tolist()


def compare_variants(cfg: RunConfig, out_dir: str | Path, seeds: Sequence[int] | None = None,
                     workers: int = 1) -> dict:
    """Train both FFN variants with identical settings; convergence and resource tables."""
    out_dir = Path(out_dir)
    summaries = {v: run_training(cfg, out_dir, seeds, v, workers) for v in FFN_VARIANTS}
    casci = summaries["gpt2"]["casci_energy"]
    curves = {}
    for v, s in summaries.items():
        errs = np.abs(np.array([r["best_curve"] for r in s["runs"]]) - casci)
        curves[v] = (errs.mean(axis=0), errs.std(axis=0))
    rows = []
    for it in range(len(curves["gpt2"][0])):
        row = {"iter": it}
        for v in FFN_VARIANTS:
            row[f"{v}_mean"] = float(curves[v][0][it])
            row[f"{v}_std"] = float(curves[v][1][it])
        row["chemical_accuracy"] = CHEMICAL_ACCURACY
        rows.append(row)
    (out_dir / "convergence.csv").write_text(to_csv(rows))
    params = report_params(cfg, make_problem(cfg).vocab.size)
    resources = []
    for v in FFN_VARIANTS:
        p = params["variants"][v]
        walls = [r["wall_seconds"] for r in summaries[v]["runs"]]
        resources.append({"variant": v, "parameters": p["total"], "bytes_f64": p["bytes_f64"],
                          "wall_seconds_mean": float(np.mean(walls)), "wall_seconds_std": float(np.std(walls))})
    final = [{"variant": v, "best_error_mean": s["best_error_mean"], "best_error_std": s["best_error_std"],
              "n_chemically_accurate": s["n_chemically_accurate"], "n_seeds": len(s["seeds"])}
             for v, s in summaries.items()]
    result = {
        "chemical_accuracy": CHEMICAL_ACCURACY,
        "final_errors": final,
        "resources": resources,
        "parameter_reduction_percent": params["reduction_percent"],
        "convergence": rows,
    }
    (out_dir / "comparison.json").write_text(json.dumps(result, indent=1))
    return result


def to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), extrasaction="ignore")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def format_table(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    if not rows:
        return ""
    columns = list(columns or [k for k, v in rows[0].items() if not isinstance(v, (list, dict))])

    def fmt(v):
        if isinstance(v, float):
            return f"{v:.6g}" if (v == 0 or 1e-3 <= abs(v) < 1e7) and math.isfinite(v) else f"{v:.3e}"
        return str(v)

    cells = [[fmt(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(x.rjust(w) for x, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)
