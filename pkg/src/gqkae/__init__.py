"""Generative quantum-inspired Kolmogorov-Arnold eigensolver."""

from .fermion import MolecularIntegrals, build_hubbard, parse_fcidump, read_fcidump, write_fcidump
from .model import CircuitPolicy, ModelConfig, parameter_report
from .pool import build_vocabulary, count_gates, enumerate_uccsd
from .qsci import casci_reference, select_subspace, solve_subspace
from .trainer import Problem, QSCIConfig, TrainerConfig, train
from .estimator import GQKAEEstimator

__version__ = "0.1.0"

__all__ = [
    "CircuitPolicy",
    "GQKAEEstimator",
    "ModelConfig",
    "MolecularIntegrals",
    "Problem",
    "QSCIConfig",
    "TrainerConfig",
    "build_hubbard",
    "build_vocabulary",
    "casci_reference",
    "count_gates",
    "enumerate_uccsd",
    "parameter_report",
    "parse_fcidump",
    "read_fcidump",
    "select_subspace",
    "solve_subspace",
    "train",
    "write_fcidump",
]
