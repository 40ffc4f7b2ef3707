"""Run configuration stored as TOML."""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from importlib.resources import files
from pathlib import Path
from types import SimpleNamespace
from typing import List, Tuple

import tomlkit

from .fermion import MolecularIntegrals, build_hubbard, read_fcidump
from .model import ModelConfig
from .pool import DEFAULT_ANGLE_GRID
from .trainer import QSCIConfig, TrainerConfig

RUN_ROOT_ENV = "GQKAE_RUN_ROOT"
BUILTIN_PREFIX = "builtin:"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violated field."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class SystemSection:
    fcidump: str = "builtin:h2_sto3g"
    hubbard: List[float] | None = None  # [n_sites, t, U]
    n_electrons: int | None = None
    ms2: int | None = None


@dataclass
class ModelSection:
    variant: str = "hqkan"
    n_tokens: int | None = None  # None: size of the operator pool
    seq_len: int = 20
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 4
    d_latent: int = 12
    qkan_layers: int = 1
    daruan_depth: int = 3
    init_std: float = 0.02


@dataclass
class TrainerSection:
    batch_size: int = 10
    n_iterations: int = 100
    learning_rate: float = 5e-6
    weight_decay: float = 0.01
    repetition_penalty: float = 1.2
    updates_per_batch: int = 30
    clip_epsilon: float = 0.2
    penalized_log_probs: bool = True
    checkpoint_every: int = 25
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])


@dataclass
class QSCISection:
    d_max: int = 2000
    n_shots: int = 100_000
    exact: bool = False
    complete_symmetry: bool = True


@dataclass
class RunConfig:
    system: SystemSection = field(default_factory=SystemSection)
    angles: List[float] = field(default_factory=lambda: list(DEFAULT_ANGLE_GRID))
    model: ModelSection = field(default_factory=ModelSection)
    trainer: TrainerSection = field(default_factory=TrainerSection)
    qsci: QSCISection = field(default_factory=QSCISection)
    output: str = "runs/default"
    base_dir: str = field(default=".", compare=False, repr=False)

    # -- validation ---------------------------------------------------------
    def validation_errors(self) -> List[str]:
        err = []
        s = self.system
        if s.hubbard is not None:
            if len(s.hubbard) != 3:
                err.append("system.hubbard: expected [n_sites, t, U]")
            elif int(s.hubbard[0]) != s.hubbard[0] or s.hubbard[0] < 2:
                err.append("system.hubbard: n_sites must be an integer >= 2")
        elif not s.fcidump:
            err.append("system: one of fcidump or hubbard is required")
        if s.n_electrons is not None and s.n_electrons < 1:
            err.append("system.n_electrons: must be >= 1")
        if not self.angles:
            err.append("angles: grid must be non-empty")
        elif any(not math.isfinite(a) for a in self.angles):
            err.append("angles: all entries must be finite")
        m = self.model
        if m.n_tokens is not None and m.n_tokens < 1:
            err.append("model.n_tokens: must be >= 1")
        # checked unbound: constructing an invalid ModelConfig raises on the first error
        mc = SimpleNamespace(n_tokens=1, seq_len=max(m.seq_len, 1), d_model=m.d_model, n_heads=m.n_heads,
                             n_layers=m.n_layers, ffn_variant=m.variant, d_latent=m.d_latent,
                             qkan_layers=m.qkan_layers, daruan_depth=m.daruan_depth)
        err += [f"model.{e}" for e in ModelConfig.validation_errors(mc)]
        if m.seq_len < 1:
            err.append("model.seq_len: must be >= 1")
        t = self.trainer
        if t.batch_size < 2:
            err.append("trainer.batch_size: must be >= 2 for group-relative advantages")
        if t.n_iterations < 1:
            err.append("trainer.n_iterations: must be >= 1")
        if not t.learning_rate > 0:
            err.append("trainer.learning_rate: must be > 0")
        if t.weight_decay < 0:
            err.append("trainer.weight_decay: must be >= 0")
        if t.repetition_penalty < 1:
            err.append("trainer.repetition_penalty: must be >= 1")
        if t.updates_per_batch < 1:
            err.append("trainer.updates_per_batch: must be >= 1")
        if not 0 < t.clip_epsilon < 1:
            err.append("trainer.clip_epsilon: must lie in (0, 1)")
        if not t.seeds:
            err.append("trainer.seeds: at least one seed is required")
        q = self.qsci
        if q.d_max < 1:
            err.append("qsci.d_max: must be >= 1")
        if not q.exact and q.n_shots < 1:
            err.append("qsci.n_shots: must be >= 1 unless exact = true")
        if not self.output:
            err.append("output: run directory is required")
        return err

    def validate(self) -> "RunConfig":
        errors = self.validation_errors()
        if errors:
            raise ConfigError(errors)
        return self

    # -- derived objects ----------------------------------------------------
    def load_integrals(self) -> MolecularIntegrals:
        s = self.system
        if s.hubbard is not None:
            n, t, u = s.hubbard
            return build_hubbard(int(n), float(t), float(u), s.n_electrons, s.ms2)
        ints = read_fcidump(resolve_fcidump(s.fcidump, self.base_dir))
        if s.n_electrons is not None or s.ms2 is not None:
            ne = ints.n_electrons if s.n_electrons is None else s.n_electrons
            ms2 = ints.ms2 if s.ms2 is None else s.ms2
            ints = replace(ints, n_electrons=ne, ms2=ms2)
        return ints

    def qsci_config(self) -> QSCIConfig:
        q = self.qsci
        return QSCIConfig(d_max=q.d_max, n_shots=None if q.exact else q.n_shots,
                          complete_symmetry=q.complete_symmetry)

    def trainer_config(self) -> TrainerConfig:
        t = self.trainer
        return TrainerConfig(batch_size=t.batch_size, n_iterations=t.n_iterations, learning_rate=t.learning_rate,
                             weight_decay=t.weight_decay, repetition_penalty=t.repetition_penalty,
                             updates_per_batch=t.updates_per_batch, clip_epsilon=t.clip_epsilon,
                             penalized_log_probs=t.penalized_log_probs, checkpoint_every=t.checkpoint_every)

    def model_config(self, n_tokens: int | None = None, variant: str | None = None) -> ModelConfig:
        m = self.model
        n_tokens = n_tokens or m.n_tokens
        if n_tokens is None:
            raise ConfigError(["model.n_tokens: unknown without an operator pool"])
        return ModelConfig(n_tokens=n_tokens, seq_len=m.seq_len, d_model=m.d_model, n_heads=m.n_heads,
                           n_layers=m.n_layers, ffn_variant=variant or m.variant, d_latent=m.d_latent,
                           qkan_layers=m.qkan_layers, daruan_depth=m.daruan_depth, init_std=m.init_std)

    def run_dir(self) -> Path:
        out = Path(self.output)
        if out.is_absolute():
            return out
        return Path(os.environ.get(RUN_ROOT_ENV, ".")) / out

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        if d["system"]["hubbard"] is None:
            del d["system"]["hubbard"]
        for key in ("n_electrons", "ms2"):
            if d["system"][key] is None:
                del d["system"][key]
        if d["model"]["n_tokens"] is None:
            del d["model"]["n_tokens"]
        return d

    def to_toml(self) -> str:
        return tomlkit.dumps(self.to_dict())


_SECTIONS = {"system": SystemSection, "model": ModelSection, "trainer": TrainerSection, "qsci": QSCISection}


def config_from_dict(data: dict, base_dir: str = ".") -> RunConfig:
    """Build a config, collecting unknown keys and type errors before raising."""
    errors = []
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                errors.append(f"{key}: expected a table")
                continue
            known = {f.name for f in fields(cls)}
            for k in value:
                if k not in known:
                    errors.append(f"{key}.{k}: unknown field")
            try:
                kwargs[key] = cls(**{k: v for k, v in value.items() if k in known})
            except TypeError as exc:
                errors.append(f"{key}: {exc}")
        elif key == "angles":
            kwargs["angles"] = [float(a) for a in value]
        elif key == "output":
            kwargs["output"] = str(value)
        else:
            errors.append(f"{key}: unknown field")
    if errors:
        raise ConfigError(errors)
    cfg = RunConfig(**kwargs, base_dir=base_dir)
    _check_types(cfg, errors)
    errors += cfg.validation_errors()
    if errors:
        raise ConfigError(errors)
    return cfg


def _check_types(cfg: RunConfig, errors: List[str]):
    for name, cls in _SECTIONS.items():
        section = getattr(cfg, name)
        default = cls()
        for f in fields(cls):
            value, ref = getattr(section, f.name), getattr(default, f.name)
            if ref is None or value is None:
                continue
            if isinstance(ref, bool):
                ok = isinstance(value, bool)
            elif isinstance(ref, int):
                ok = isinstance(value, int) and not isinstance(value, bool)
            elif isinstance(ref, float):
                ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            else:
                ok = isinstance(value, type(ref))
            if not ok:
                errors.append(f"{name}.{f.name}: expected {type(ref).__name__}, got {type(value).__name__}")


def loads(text: str, base_dir: str = ".") -> RunConfig:
    try:
        doc = tomlkit.parse(text)
    except tomlkit.exceptions.ParseError as exc:
        raise ConfigError([f"TOML syntax: {exc}"]) from exc
    return config_from_dict(doc.unwrap(), base_dir)


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        builtin = files("gqkae") / "configs" / path.name
        if builtin.is_file():
            return loads(builtin.read_text(), str(Path(str(builtin)).parent))
        raise ConfigError([f"config file {path} does not exist"])
    return loads(path.read_text(), str(path.resolve().parent))


def resolve_fcidump(spec: str, base_dir: str = ".") -> str:
    if spec.startswith(BUILTIN_PREFIX):
        name = spec[len(BUILTIN_PREFIX):]
        return str(files("gqkae") / "data" / f"{name}.fcidump")
    path = Path(spec)
    return str(path if path.is_absolute() else Path(base_dir) / path)


def parse_hubbard(text: str) -> Tuple[int, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError([f"--hubbard expects n_sites,t,U; got {text!r}"])
    try:
        return int(parts[0]), float(parts[1]), float(parts[2])
    except ValueError as exc:
        raise ConfigError([f"--hubbard: {exc}"]) from exc
