"""Autoregressive circuit policy: a pre-LN decoder-only transformer whose
feed-forward sublayer is either the GPT-2 MLP or an HQKAN block
(encoder -> QKAN latent processor with DARUAN edges -> decoder).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Module, Parameter, Tensor

FFN_VARIANTS = ("gpt2", "hqkan")


@dataclass(frozen=True)
class ModelConfig:
    """Policy hyperparameters.

    ``n_tokens`` is the number of operator tokens |G|; the input vocabulary
    has one extra start token, so ``vocab_size == n_tokens + 1``.
    """

    n_tokens: int
    seq_len: int
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 4
    ffn_variant: str = "hqkan"
    d_latent: int = 12
    qkan_layers: int = 1
    daruan_depth: int = 3
    init_std: float = 0.02

    def __post_init__(self):
        errors = self.validation_errors()
        if errors:
            raise ValueError("invalid model config: " + "; ".join(errors))

    def validation_errors(self) -> List[str]:
        errors = []
        if self.ffn_variant not in FFN_VARIANTS:
            errors.append(f"ffn_variant must be one of {FFN_VARIANTS}, got {self.ffn_variant!r}")
        for name in ("n_tokens", "seq_len", "d_model", "n_heads", "n_layers", "d_latent", "qkan_layers",
                     "daruan_depth"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1")
        if self.n_heads >= 1 and self.d_model % self.n_heads:
            errors.append(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.ffn_variant == "hqkan" and self.d_latent >= self.d_model:
            errors.append(f"d_latent={self.d_latent} must be smaller than d_model={self.d_model}")
        return errors

    @property
    def vocab_size(self) -> int:
        return self.n_tokens + 1

    @property
    def start_token(self) -> int:
        return self.n_tokens

    @property
    def n_positions(self) -> int:
        return self.seq_len + 1

    @property
    def d_ff(self) -> int:
        return 4 * self.d_model

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "ModelConfig":
        return ModelConfig(**{**asdict(self), **changes})


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, std: float, name: str):
        self.weight = Parameter(rng.normal(0.0, std, (n_in, n_out)), f"{name}.weight", f"normal(0,{std})")
        self.bias = Parameter(np.zeros(n_out), f"{name}.bias", "zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, d: int, name: str):
        self.gain = Parameter(np.ones(d), f"{name}.gain", "ones")
        self.bias = Parameter(np.zeros(d), f"{name}.bias", "zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)


def daruan(x, frequency, phase, mixing) -> Tensor:
    """Single-qubit re-uploading activation <0|U^dag Z U|0>.

    ``U = prod_l Ry(mixing_l) Rz(frequency_l * x + phase_l)`` with l = 1
    applied first. Tracked as a real Bloch vector, so every intermediate is
    a real tensor. The last axis of the parameters indexes repetitions; all
    other axes broadcast against ``x``.
    """
    x = ad.as_tensor(x)
    frequency, phase, mixing = (ad.as_tensor(t) for t in (frequency, phase, mixing))
    bx = by = bz = None
    for l in range(frequency.shape[-1]):
        angle = x * frequency[..., l] + phase[..., l]
        ct, st = ad.cos(mixing[..., l]), ad.sin(mixing[..., l])
        if bz is None:
            # Rz only adds a global phase to |0>
            bx, by, bz = st, None, ct
            continue
        c, s = ad.cos(angle), ad.sin(angle)
        if by is None:
            bx, by = bx * c, bx * s
        else:
            bx, by = bx * c - by * s, bx * s + by * c
        bx, bz = bx * ct + bz * st, bz * ct - bx * st
    if bz.shape != angle.shape:
        bz = bz + ad.mul(angle, 0.0)
    return bz


class QKANLayer(Module):
    """out_j = sum_i phi_{j,i}(in_i) with an independent DARUAN per edge."""

    def __init__(self, width: int, depth: int, rng: np.random.Generator, name: str):
        shape = (width, width, depth)
        self.frequency = Parameter(rng.uniform(0.5, 1.5, shape), f"{name}.frequency", "uniform(0.5,1.5)")
        self.phase = Parameter(rng.uniform(-np.pi, np.pi, shape), f"{name}.phase", "uniform(-pi,pi)")
        self.mixing = Parameter(rng.uniform(-0.1, 0.1, shape), f"{name}.mixing", "uniform(-0.1,0.1)")

    def edge_values(self, z: Tensor) -> Tensor:
        """phi_{j,i}(z_i), shape (..., out, in)."""
        zi = ad.reshape(z, z.shape[:-1] + (1, z.shape[-1]))
        return daruan(zi, self.frequency, self.phase, self.mixing)

    def __call__(self, z: Tensor) -> Tensor:
        return ad.sum_(self.edge_values(z), axis=-1)


class HQKAN(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str):
        self.encoder = Linear(cfg.d_model, cfg.d_latent, rng, cfg.init_std, f"{name}.encoder")
        self.qkan = [QKANLayer(cfg.d_latent, cfg.daruan_depth, rng, f"{name}.qkan.{i}") for i in range(cfg.qkan_layers)]
        self.decoder = Linear(cfg.d_latent, cfg.d_model, rng, cfg.init_std, f"{name}.decoder")

    def __call__(self, h: Tensor) -> Tensor:
        z = self.encoder(h)
        for layer in self.qkan:
            z = layer(z)
        return self.decoder(z)


class MLP(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str):
        self.fc = Linear(cfg.d_model, cfg.d_ff, rng, cfg.init_std, f"{name}.fc")
        self.proj = Linear(cfg.d_ff, cfg.d_model, rng, cfg.init_std, f"{name}.proj")

    def __call__(self, h: Tensor) -> Tensor:
        return self.proj(ad.gelu(self.fc(h)))


class CausalSelfAttention(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str):
        self.n_heads = cfg.n_heads
        self.qkv = Linear(cfg.d_model, 3 * cfg.d_model, rng, cfg.init_std, f"{name}.qkv")
        self.proj = Linear(cfg.d_model, cfg.d_model, rng, cfg.init_std, f"{name}.proj")

    def __call__(self, x: Tensor) -> Tensor:
        B, T, d = x.shape
        H, hd = self.n_heads, d // self.n_heads
        qkv = self.qkv(x)

        def heads(t):
            return ad.transpose(ad.reshape(t, (B, T, H, hd)), (0, 2, 1, 3))

        q, k, v = (heads(qkv[..., i * d:(i + 1) * d]) for i in range(3))
        scores = ad.mul(q @ ad.transpose(k, (0, 1, 3, 2)), 1.0 / np.sqrt(hd))
        att = ad.softmax(ad.causal_mask_fill(scores), axis=-1)
        y = ad.reshape(ad.transpose(att @ v, (0, 2, 1, 3)), (B, T, d))
        return self.proj(y)


class Block(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str):
        self.ln1 = LayerNorm(cfg.d_model, f"{name}.ln1")
        self.attn = CausalSelfAttention(cfg, rng, f"{name}.attn")
        self.ln2 = LayerNorm(cfg.d_model, f"{name}.ln2")
        self.ffn = HQKAN(cfg, rng, f"{name}.ffn") if cfg.ffn_variant == "hqkan" else MLP(cfg, rng, f"{name}.ffn")

    def __call__(self, h: Tensor) -> Tensor:
        h = h + self.attn(self.ln1(h))
        return h + self.ffn(self.ln2(h))


class CircuitPolicy(Module):
    """p(j_k | j_<k) over operator tokens; input position 0 holds the start token."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.config = cfg
        rng = np.random.default_rng(seed)
        self.token_embedding = Parameter(rng.normal(0.0, cfg.init_std, (cfg.vocab_size, cfg.d_model)),
                                         "token_embedding", f"normal(0,{cfg.init_std})")
        self.position_embedding = Parameter(rng.normal(0.0, cfg.init_std, (cfg.n_positions, cfg.d_model)),
                                            "position_embedding", f"normal(0,{cfg.init_std})")
        self.blocks = [Block(cfg, rng, f"blocks.{i}") for i in range(cfg.n_layers)]
        self.ln_f = LayerNorm(cfg.d_model, "ln_f")
        self.head = Linear(cfg.d_model, cfg.n_tokens, rng, cfg.init_std, "head")

    def forward_logits(self, tokens: np.ndarray) -> Tensor:
        """Logits of shape (B, T, n_tokens) for input ids of shape (B, T)."""
        tokens = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
        B, T = tokens.shape
        if T > self.config.n_positions:
            raise ValueError(f"prefix length {T} exceeds {self.config.n_positions} positions")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.config.vocab_size):
            raise ValueError(f"unknown token id in {tokens.tolist()}")
        h = ad.embedding(self.token_embedding, tokens) + self.position_embedding[:T]
        for block in self.blocks:
            h = block(h)
        return self.head(self.ln_f(h))

    __call__ = forward_logits


def forward_logits(model: CircuitPolicy, prefix: np.ndarray) -> Tensor:
    return model.forward_logits(prefix)


# sampling

def seen_mask(tokens: np.ndarray, n_tokens: int) -> np.ndarray:
    """seen[m, t, g] is True when token g occurs in tokens[m, :t]."""
    M, L = tokens.shape
    onehot = np.zeros((M, L, n_tokens), dtype=bool)
    onehot[np.arange(M)[:, None], np.arange(L)[None, :], tokens] = True
    seen = np.zeros_like(onehot)
    seen[:, 1:] = np.logical_or.accumulate(onehot, axis=1)[:, :-1]
    return seen


def penalty_factors(logits: np.ndarray, seen: np.ndarray, penalty: float) -> np.ndarray:
    """Multiplicative CTRL-style penalty: positive logits divided, negative multiplied."""
    factors = np.ones_like(logits)
    if penalty != 1.0:
        factors[seen & (logits > 0)] = 1.0 / penalty
        factors[seen & (logits < 0)] = penalty
    return factors


@dataclass
class TokenSequence:
    tokens: np.ndarray
    log_probs: np.ndarray

    def __len__(self):
        return len(self.tokens)


def sequence_log_probs(model: CircuitPolicy, tokens: np.ndarray, penalty: float = 1.0) -> Tensor:
    """Per-token log-probabilities (M, L) of given sequences under the (penalized) policy."""
    tokens = np.asarray(tokens, dtype=np.int64)
    M, L = tokens.shape
    cfg = model.config
    inputs = np.concatenate([np.full((M, 1), cfg.start_token), tokens[:, :-1]], axis=1)
    logits = model.forward_logits(inputs)
    if penalty != 1.0:
        logits = logits * penalty_factors(logits.data, seen_mask(tokens, cfg.n_tokens), penalty)
    return ad.take_along(ad.log_softmax(logits, axis=-1), tokens, axis=-1)


def sample_sequences(model: CircuitPolicy, M: int, L: int | None = None, repetition_penalty: float = 1.0,
                     rng_seed: int | np.random.Generator | None = None, greedy: bool = False) -> List[TokenSequence]:
    if M < 1:
        raise ValueError(f"batch size must be >= 1, got {M}")
    cfg = model.config
    L = cfg.seq_len if L is None else L
    rng = np.random.default_rng(rng_seed)
    prefix = np.full((M, 1), cfg.start_token, dtype=np.int64)
    seen = np.zeros((M, cfg.n_tokens), dtype=bool)
    log_probs = np.zeros((M, L))
    with ad.no_grad():
        for t in range(L):
            logits = model.forward_logits(prefix).data[:, -1, :]
            logits = logits * penalty_factors(logits, seen, repetition_penalty)
            shifted = logits - logits.max(axis=-1, keepdims=True)
            logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
            if greedy:
                choice = logp.argmax(axis=-1)
            else:
                cdf = np.cumsum(np.exp(logp), axis=-1)
                u = rng.random(M) * cdf[:, -1]
                choice = np.minimum((cdf < u[:, None]).sum(axis=-1), cfg.n_tokens - 1)
            log_probs[:, t] = logp[np.arange(M), choice]
            seen[np.arange(M), choice] = True
            prefix = np.concatenate([prefix, choice[:, None]], axis=1)
    return [TokenSequence(prefix[m, 1:].copy(), log_probs[m].copy()) for m in range(M)]


# parameter accounting

BYTES_F64 = 8
BYTES_F32 = 4


def ffn_parameter_count(cfg: ModelConfig) -> int:
    d = cfg.d_model
    if cfg.ffn_variant == "gpt2":
        return 8 * d * d + 5 * d
    dz = cfg.d_latent
    return d * dz + dz + cfg.qkan_layers * dz * dz * 3 * cfg.daruan_depth + dz * d + d


@dataclass(frozen=True)
class ParameterReport:
    variant: str
    components: Dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.components.values())

    @property
    def bytes_f64(self) -> int:
        return self.total * BYTES_F64

    @property
    def bytes_f32(self) -> int:
        return self.total * BYTES_F32

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "components": dict(self.components),
            "total": self.total,
            "bytes_f64": self.bytes_f64,
            "bytes_f32": self.bytes_f32,
        }


def parameter_report(cfg: ModelConfig) -> ParameterReport:
    d, nl = cfg.d_model, cfg.n_layers
    return ParameterReport(cfg.ffn_variant, {
        "embeddings": cfg.vocab_size * d + cfg.n_positions * d,
        "attention": nl * (4 * d * d + 4 * d),
        "layer_norms": nl * 4 * d + 2 * d,
        "ffn": nl * ffn_parameter_count(cfg),
        "head": d * cfg.n_tokens + cfg.n_tokens,
    })


def instantiated_components(model: CircuitPolicy) -> Dict[str, int]:
    """Count instantiated scalars per report component."""
    out = {"embeddings": 0, "attention": 0, "layer_norms": 0, "ffn": 0, "head": 0}
    for name, p in model.named_parameters():
        if name.endswith("embedding"):
            key = "embeddings"
        elif ".attn." in name:
            key = "attention"
        elif ".ln" in name or name.startswith("ln_f"):
            key = "layer_norms"
        elif ".ffn." in name:
            key = "ffn"
        else:
            key = "head"
        out[key] += p.size
    return out


# Inferred width/depth landing near the published GPT-2 baseline size; not
# trained at desk scale.
LARGE_SCALE = dict(n_tokens=300, seq_len=20, d_model=768, n_heads=12, n_layers=8, d_latent=12,
                   qkan_layers=1, daruan_depth=3)


def large_scale_config(variant: str) -> ModelConfig:
    return ModelConfig(ffn_variant=variant, **LARGE_SCALE)


def no_decay(name: str) -> bool:
    """Parameters excluded from weight decay: biases, norm gains, DARUAN angles."""
    return (
        name.endswith(".bias")
        or name.endswith(".gain")
        or ".qkan." in name
    )


def parameter_names(model: Module) -> Sequence[str]:
    return [n for n, _ in model.named_parameters()]
