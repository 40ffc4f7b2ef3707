"""scikit-learn style facade over the training pipeline.

The estimator "fits" one Hamiltonian: ``fit`` trains a circuit policy on it
and ``predict`` returns the best variational energy found. There is no
sample axis, so cross-validation utilities do not apply.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .fermion import MolecularIntegrals, parse_fcidump, read_fcidump
from .model import ModelConfig, sample_sequences
from .pool import DEFAULT_ANGLE_GRID
from .trainer import Problem, QSCIConfig, TrainerConfig, train


def check_integrals(X) -> MolecularIntegrals:
    """Accept integrals, an FCIDUMP path, or FCIDUMP text."""
    if isinstance(X, MolecularIntegrals):
        return X
    if isinstance(X, Path) or (isinstance(X, str) and "&FCI" not in X.upper() and Path(X).exists()):
        return read_fcidump(X)
    if isinstance(X, str):
        return parse_fcidump(X)
    raise TypeError(f"expected MolecularIntegrals, an FCIDUMP path or FCIDUMP text; got {type(X).__name__}")


def check_positive(name: str, value, integer: bool = True):
    ok = isinstance(value, (int, np.integer)) if integer else isinstance(value, (int, float, np.floating))
    if isinstance(value, bool) or not ok or not value > 0:
        kind = "positive integer" if integer else "positive number"
        raise ValueError(f"{name} must be a {kind}, got {value!r}")


class GQKAEEstimator(BaseEstimator):
    def __init__(self, ffn_variant="hqkan", seq_len=4, d_model=128, n_heads=4, n_layers=4, d_latent=12,
                 qkan_layers=1, daruan_depth=3, batch_size=10, n_iterations=100, learning_rate=5e-6,
                 weight_decay=0.01, repetition_penalty=1.2, updates_per_batch=30, clip_epsilon=0.2,
                 d_max=2000, n_shots=100_000, complete_symmetry=True, angle_grid=DEFAULT_ANGLE_GRID,
                 random_state=0):
        self.ffn_variant = ffn_variant
        self.seq_len = seq_len
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.d_latent = d_latent
        self.qkan_layers = qkan_layers
        self.daruan_depth = daruan_depth
        self.batch_size = batch_size
        self.n_iterations = n_iterations
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.repetition_penalty = repetition_penalty
        self.updates_per_batch = updates_per_batch
        self.clip_epsilon = clip_epsilon
        self.d_max = d_max
        self.n_shots = n_shots
        self.complete_symmetry = complete_symmetry
        self.angle_grid = angle_grid
        self.random_state = random_state

    def _validate_params(self):
        for name in ("seq_len", "d_model", "n_heads", "n_layers", "d_latent", "qkan_layers", "daruan_depth",
                     "batch_size", "n_iterations", "updates_per_batch", "d_max"):
            check_positive(name, getattr(self, name))
        check_positive("learning_rate", self.learning_rate, integer=False)
        if self.n_shots is not None:
            check_positive("n_shots", self.n_shots)
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for group-relative advantages")

    def fit(self, X, y=None):
        """Train a policy on the Hamiltonian ``X``; ``y`` is ignored."""
        self._validate_params()
        ints = check_integrals(X)
        qsci = QSCIConfig(d_max=self.d_max, n_shots=self.n_shots, complete_symmetry=self.complete_symmetry)
        problem = Problem(ints, self.angle_grid, qsci)
        mc = ModelConfig(n_tokens=problem.vocab.size, seq_len=self.seq_len, d_model=self.d_model,
                         n_heads=self.n_heads, n_layers=self.n_layers, ffn_variant=self.ffn_variant,
                         d_latent=self.d_latent, qkan_layers=self.qkan_layers, daruan_depth=self.daruan_depth)
        errors = mc.validation_errors()
        if errors:
            raise ValueError("; ".join(errors))
        tc = TrainerConfig(batch_size=self.batch_size, n_iterations=self.n_iterations,
                           learning_rate=self.learning_rate, weight_decay=self.weight_decay,
                           repetition_penalty=self.repetition_penalty, updates_per_batch=self.updates_per_batch,
                           clip_epsilon=self.clip_epsilon)
        result = train(problem, mc, tc, seed=self.random_state)
        self.problem_ = problem
        self.policy_ = result.model
        self.history_ = result.metrics
        self.best_energy_ = result.best_energy
        self.best_sequence_ = result.best_tokens
        self.reference_energy_ = problem.casci_energy
        self.n_tokens_ = problem.vocab.size
        return self

    def predict(self, X=None):
        """Best QSCI energy found during ``fit``; ``X`` must be the fitted system if given."""
        check_is_fitted(self, "best_energy_")
        if X is not None and check_integrals(X) is not self.problem_.ints:
            ints = check_integrals(X)
            if not (np.array_equal(ints.h1, self.problem_.ints.h1) and ints.eri == self.problem_.ints.eri):
                raise ValueError("predict() only answers for the Hamiltonian passed to fit()")
        return self.best_energy_

    def score(self, X=None, y=None):
        """Negative absolute error against the exact active-space energy (higher is better)."""
        return -abs(self.predict(X) - self.reference_energy_)

    def generate(self, n_sequences: int = 10, greedy: bool = False, random_state=None):
        """Sample token sequences from the trained policy."""
        check_is_fitted(self, "policy_")
        check_positive("n_sequences", n_sequences)
        seed = self.random_state if random_state is None else random_state
        seqs = sample_sequences(self.policy_, n_sequences, self.seq_len, self.repetition_penalty, seed, greedy)
        return np.stack([s.tokens for s in seqs])

    def describe_best(self):
        check_is_fitted(self, "best_sequence_")
        return [self.problem_.vocab.describe(t) for t in self.best_sequence_]
