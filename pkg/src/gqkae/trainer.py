"""GRPO training of the circuit policy against QSCI rewards."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .fermion import MolecularIntegrals
from .model import CircuitPolicy, ModelConfig, TokenSequence, no_decay, sample_sequences, sequence_log_probs
from .pool import Vocabulary, build_vocabulary, compile_sequence, enumerate_uccsd, DEFAULT_ANGLE_GRID
from .qsci import (
    EmptySubspaceError,
    LanczosNotConverged,
    SubspaceSelection,
    casci_reference,
    hartree_fock_determinant,
    hartree_fock_energy,
    select_subspace,
    solve_subspace,
)
from .simulator import MeasurementRecord, exact_distribution, prepare_reference, apply_circuit, sample

log = logging.getLogger(__name__)

SIGMA_GUARD = 1e-12
SANDWICH_TOL = 1e-9


class NumericalFailure(ArithmeticError):
    """Training produced a non-finite value or violated a variational bound."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class QSCIConfig:
    d_max: int = 2000
    n_shots: int | None = 100_000
    complete_symmetry: bool = True
    p_floor: float = 1e-12

    @property
    def exact(self) -> bool:
        return self.n_shots is None


@dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 10
    n_iterations: int = 100
    learning_rate: float = 5e-6
    weight_decay: float = 0.01
    repetition_penalty: float = 1.2
    updates_per_batch: int = 30
    clip_epsilon: float = 0.2
    betas: Tuple[float, float] = (0.9, 0.999)
    adam_epsilon: float = 1e-8
    penalized_log_probs: bool = True
    checkpoint_every: int = 25


@dataclass
class ScoredCircuit:
    tokens: Tuple[int, ...]
    energy: float
    dimension: int
    hf_in_subspace: bool
    fallback: bool = False

    @property
    def reward(self) -> float:
        return -self.energy


class Problem:
    """A Hamiltonian with its operator pool and scoring pipeline."""

    def __init__(self, ints: MolecularIntegrals, angle_grid: Sequence[float] = DEFAULT_ANGLE_GRID,
                 qsci: QSCIConfig | None = None, reference_energy: float | None = None):
        self.ints = ints
        self.n_qubits = ints.n_spin_orbitals
        self.generators = enumerate_uccsd(ints.n_orbitals, ints.n_electrons, ints.ms2)
        if not self.generators:
            raise ValueError("operator pool is empty: the active space has no virtual orbitals")
        self.vocab = build_vocabulary(self.generators, angle_grid, self.n_qubits)
        self.qsci = qsci or QSCIConfig()
        self.reference = ints.hartree_fock_occupation()
        self.hf_det = hartree_fock_determinant(ints)
        self.hf_energy = hartree_fock_energy(ints)
        self.casci_energy = casci_reference(ints) if reference_energy is None else reference_energy
        self.sandwich_checks = 0
        self._exact_cache: Dict[Tuple[int, ...], ScoredCircuit] = {}

    def prepare_state(self, tokens: Sequence[int]):
        state = prepare_reference(self.n_qubits, self.reference)
        return apply_circuit(state, compile_sequence(self.vocab, tokens))

    def measure(self, tokens: Sequence[int], seed=None, n_shots: int | None = None,
                exact: bool | None = None) -> MeasurementRecord:
        state = self.prepare_state(tokens)
        exact = self.qsci.exact if exact is None else exact
        if exact:
            return exact_distribution(state, self.qsci.p_floor)
        return sample(state, n_shots or self.qsci.n_shots, seed)

    def evaluate_record(self, record: MeasurementRecord, d_max: int | None = None) -> Tuple[float, SubspaceSelection | None]:
        """QSCI energy of a record; falls back to the HF determinant on an empty sector."""
        d_max = d_max or self.qsci.d_max
        try:
            selection = select_subspace(record, d_max, self.ints.sector, self.qsci.complete_symmetry)
        except EmptySubspaceError:
            log.warning("no in-sector determinant sampled; falling back to the HF determinant")
            return self.hf_energy, None
        try:
            result = solve_subspace(self.ints, selection)
        except LanczosNotConverged:
            if len(selection) > 4096:
                raise
            result = solve_subspace(self.ints, selection, dense_max=len(selection))
        return result.energy, selection

    def score(self, tokens: Sequence[int], seed=None) -> ScoredCircuit:
        tokens = tuple(int(t) for t in tokens)
        if self.qsci.exact and tokens in self._exact_cache:
            return self._exact_cache[tokens]
        record = self.measure(tokens, seed)
        energy, selection = self.evaluate_record(record)
        if selection is None:
            scored = ScoredCircuit(tokens, energy, 1, True, fallback=True)
        else:
            scored = ScoredCircuit(tokens, energy, len(selection), self.hf_det in selection.determinants)
        self.check_sandwich(scored)
        if self.qsci.exact:
            self._exact_cache[tokens] = scored
        return scored

    def check_sandwich(self, scored: ScoredCircuit):
        if scored.energy < self.casci_energy - SANDWICH_TOL:
            raise NumericalFailure(
                f"E_QSCI={scored.energy:.12f} below E_CASCI={self.casci_energy:.12f}",
                {"tokens": list(scored.tokens)},
            )
        if scored.hf_in_subspace and scored.energy > self.hf_energy + SANDWICH_TOL:
            raise NumericalFailure(
                f"E_QSCI={scored.energy:.12f} above E_HF={self.hf_energy:.12f} with HF in the subspace",
                {"tokens": list(scored.tokens)},
            )
        self.sandwich_checks += 1


def score_batch(problem: Problem, sequences: Sequence[TokenSequence | Sequence[int]],
                seed: int | None = None) -> List[ScoredCircuit]:
    """Score each sequence independently; each gets its own measurement seed."""
    seeds = np.random.SeedSequence(seed).spawn(len(sequences)) if seed is not None else [None] * len(sequences)
    out = []
    for seq, s in zip(sequences, seeds):
        tokens = seq.tokens if isinstance(seq, TokenSequence) else seq
        out.append(problem.score(tokens, None if s is None else np.random.default_rng(s)))
    return out


def normalize_advantages(rewards: Sequence[float]) -> Tuple[np.ndarray, bool]:
    """(advantages, degenerate). Degenerate batches get all-zero advantages."""
    r = np.asarray(rewards, dtype=float)
    sigma = r.std()
    if sigma < SIGMA_GUARD:
        return np.zeros_like(r), True
    return (r - r.mean()) / sigma, False


def grpo_loss(new_log_probs: ad.Tensor, old_log_probs: np.ndarray, advantages: np.ndarray,
              clip_epsilon: float = 0.2) -> ad.Tensor:
    """Clipped token-level surrogate, averaged over tokens and sequences."""
    old = np.asarray(old_log_probs, dtype=float)
    if new_log_probs.shape != old.shape:
        raise ad.ShapeError(f"log-prob shapes differ: {new_log_probs.shape} vs {old.shape}")
    A = np.asarray(advantages, dtype=float).reshape(-1, 1)
    ratio = ad.exp(new_log_probs - old)
    unclipped = ratio * A
    clipped = ad.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * A
    return -ad.mean(ad.minimum(unclipped, clipped))


@dataclass
class OptimizerState:
    learning_rate: float
    weight_decay: float
    betas: Tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(state: OptimizerState, params: Sequence[Tuple[str, ad.Parameter]],
               decay_filter: Callable[[str], bool] = no_decay):
    """One decoupled-weight-decay Adam update, in place."""
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.first_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(p.data)
            state.second_moment[name] = np.zeros_like(p.data)
        v = state.second_moment[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        if state.weight_decay and not decay_filter(name):
            p.data = p.data - state.learning_rate * state.weight_decay * p.data
        p.data = p.data - state.learning_rate * update


@dataclass
class TrainResult:
    metrics: List[dict]
    best_energy: float
    best_tokens: Tuple[int, ...]
    model: CircuitPolicy
    casci_energy: float
    hf_energy: float

    @property
    def best_error(self) -> float:
        return abs(self.best_energy - self.casci_energy)


def _grad_norm(params) -> float:
    return math.sqrt(sum(float(np.sum(p.grad * p.grad)) for _, p in params if p.grad is not None))


def train(problem: Problem, model_config: ModelConfig, cfg: TrainerConfig | None = None, seed: int = 0,
          out_dir: str | Path | None = None, on_iteration: Callable[[dict], None] | None = None) -> TrainResult:
    """Run GRPO for ``cfg.n_iterations`` iterations.

    With ``out_dir`` set, metrics go to ``metrics.jsonl`` (one object per
    iteration) and checkpoints to ``checkpoint_*.json/.bin``.
    """
    cfg = cfg or TrainerConfig()
    if model_config.n_tokens != problem.vocab.size:
        raise ValueError(f"model expects {model_config.n_tokens} tokens, pool has {problem.vocab.size}")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(out / "metrics.jsonl", "w")
    else:
        metrics_fh = None

    seeds = np.random.SeedSequence(seed)
    init_seed, sample_seed, score_seed = (int(s.generate_state(1)[0]) for s in seeds.spawn(3))
    model = CircuitPolicy(model_config, seed=init_seed)
    params = list(model.named_parameters())
    opt = OptimizerState(cfg.learning_rate, cfg.weight_decay, cfg.betas, cfg.adam_epsilon)
    sample_rng = np.random.default_rng(sample_seed)
    penalty_for_ratio = cfg.repetition_penalty if cfg.penalized_log_probs else 1.0

    best_energy, best_tokens = math.inf, ()
    metrics: List[dict] = []
    t0 = time.monotonic()
    try:
        for it in range(cfg.n_iterations):
            t_iter = time.monotonic()
            seqs = sample_sequences(model, cfg.batch_size, model_config.seq_len, cfg.repetition_penalty, sample_rng)
            scored = score_batch(problem, seqs, seed=score_seed + it)
            energies = np.array([s.energy for s in scored])
            i_min = int(np.argmin(energies))
            if energies[i_min] < best_energy:
                best_energy, best_tokens = float(energies[i_min]), scored[i_min].tokens

            advantages, degenerate = normalize_advantages([s.reward for s in scored])
            tokens = np.stack([s.tokens for s in seqs])
            losses, ratios, norms = [], [], []
            if not degenerate:
                with ad.no_grad():
                    old = sequence_log_probs(model, tokens, penalty_for_ratio).data.copy()
                for _ in range(cfg.updates_per_batch):
                    model.zero_grad()
                    new = sequence_log_probs(model, tokens, penalty_for_ratio)
                    loss = grpo_loss(new, old, advantages, cfg.clip_epsilon)
                    if not np.isfinite(loss.item()):
                        raise NumericalFailure(
                            f"non-finite loss at iteration {it}",
                            {"iteration": it, "tokens": tokens.tolist(), "energies": energies.tolist(),
                             "advantages": advantages.tolist()},
                        )
                    ratios.append(float(np.exp(new.data - old).mean()))
                    ad.backward(loss)
                    norms.append(_grad_norm(params))
                    losses.append(loss.item())
                    adamw_step(opt, params)
            record = {
                "iter": it,
                "best_energy": best_energy,
                "batch_min": float(energies.min()),
                "batch_mean": float(energies.mean()),
                "loss": float(np.mean(losses)) if losses else 0.0,
                "mean_ratio": float(np.mean(ratios)) if ratios else 1.0,
                "grad_norm": float(np.mean(norms)) if norms else 0.0,
                "skipped": degenerate,
                "seconds": time.monotonic() - t_iter,
            }
            if metrics and record["best_energy"] > metrics[-1]["best_energy"]:
                raise NumericalFailure("best-so-far energy increased")
            metrics.append(record)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record) + "\n")
                metrics_fh.flush()
            if on_iteration is not None:
                on_iteration(record)
            if out is not None and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                _checkpoint(model, out / f"checkpoint_{it + 1:04d}", it + 1, best_energy, best_tokens)
    except NumericalFailure as exc:
        if out is not None:
            (out / "failure.json").write_text(json.dumps({"error": str(exc), **exc.diagnostics}, indent=1))
        raise
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    if out is not None:
        _checkpoint(model, out / "checkpoint_final", cfg.n_iterations, best_energy, best_tokens)
        summary = {
            "seed": seed,
            "best_energy": best_energy,
            "best_tokens": list(best_tokens),
            "best_circuit": [problem.vocab.describe(t) for t in best_tokens],
            "casci_energy": problem.casci_energy,
            "hf_energy": problem.hf_energy,
            "best_error": abs(best_energy - problem.casci_energy),
            "wall_seconds": time.monotonic() - t0,
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=1))
    return TrainResult(metrics, best_energy, best_tokens, model, problem.casci_energy, problem.hf_energy)


def _checkpoint(model: CircuitPolicy, path: Path, iteration: int, best_energy: float, best_tokens):
    ad.save_checkpoint(path, model.state_dict(), {
        "iteration": iteration,
        "best_energy": best_energy,
        "best_tokens": list(best_tokens),
        "model_config": model.config.to_dict(),
    })


def load_policy(path: str | Path) -> Tuple[CircuitPolicy, dict]:
    state, meta = ad.load_checkpoint(path)
    model = CircuitPolicy(ModelConfig(**meta["model_config"]))
    model.load_state_dict(state)
    return model, meta


def config_dict(cfg) -> dict:
    return asdict(cfg)
