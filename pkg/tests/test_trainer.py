import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gqkae import autodiff as ad
from gqkae.model import CircuitPolicy, ModelConfig, sequence_log_probs
from gqkae.trainer import (
    NumericalFailure,
    OptimizerState,
    Problem,
    QSCIConfig,
    ScoredCircuit,
    TrainerConfig,
    adamw_step,
    grpo_loss,
    load_policy,
    normalize_advantages,
    score_batch,
    train,
)
from conftest import H2_CASCI, H2_HF


@pytest.fixture(scope="module")
def h2_exact(h2):
    return Problem(h2, qsci=QSCIConfig(n_shots=None))


@pytest.fixture(scope="module")
def h2_sampled(h2):
    return Problem(h2, qsci=QSCIConfig(n_shots=2000))


def small_model(problem, variant="hqkan", seq_len=4):
    return ModelConfig(n_tokens=problem.vocab.size, seq_len=seq_len, d_model=16, n_heads=2, n_layers=1,
                       ffn_variant=variant, d_latent=4)


FAST = TrainerConfig(batch_size=6, n_iterations=4, learning_rate=1e-3, updates_per_batch=3, checkpoint_every=2)


# surrogate loss

def test_grpo_loss_clipped_positive_advantage():
    loss = grpo_loss(ad.Tensor(np.array([[np.log(1.5)]])), np.zeros((1, 1)), np.array([1.0]))
    assert loss.item() == pytest.approx(-1.2, abs=1e-12)


def test_grpo_loss_negative_advantage_unclipped_branch():
    loss = grpo_loss(ad.Tensor(np.array([[np.log(0.8)]])), np.zeros((1, 1)), np.array([-1.0]))
    assert loss.item() == pytest.approx(0.8, abs=1e-12)


def test_grpo_loss_zero_at_unit_ratio_with_symmetric_advantages(rng):
    lp = rng.normal(-2, 0.5, (4, 5))
    loss = grpo_loss(ad.Tensor(lp), lp, np.array([1.5, -0.5, 0.5, -1.5]))
    assert loss.item() == 0.0


def test_grpo_gradient_at_unit_ratio_is_policy_gradient(h2_exact, rng):
    model = CircuitPolicy(small_model(h2_exact), seed=0)
    tokens = rng.integers(0, h2_exact.vocab.size, (5, 4))
    adv = rng.standard_normal(5)
    with ad.no_grad():
        old = sequence_log_probs(model, tokens, 1.2).data.copy()
    params = model.parameters()
    model.zero_grad()
    ad.backward(grpo_loss(sequence_log_probs(model, tokens, 1.2), old, adv))
    g_grpo = [p.grad.copy() for p in params]
    model.zero_grad()
    lp = sequence_log_probs(model, tokens, 1.2)
    ad.backward(-ad.mean(lp * adv.reshape(-1, 1)))
    for a, p in zip(g_grpo, params):
        assert np.allclose(a, p.grad, atol=1e-12)


def test_clip_inactive_for_small_ratios(rng):
    old = rng.normal(-1, 0.3, (3, 4))
    new = ad.Tensor(old + rng.uniform(-0.05, 0.05, old.shape), requires_grad=True)
    adv = rng.standard_normal(3)
    ad.backward(grpo_loss(new, old, adv))
    ratio = np.exp(new.data - old)
    assert np.allclose(new.grad, -(ratio * adv[:, None]) / old.size, atol=1e-14)


def test_grpo_loss_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        grpo_loss(ad.Tensor(np.zeros((2, 3))), np.zeros((2, 4)), np.zeros(2))


# advantages

@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=20))
def test_advantage_invariants(rewards):
    adv, degenerate = normalize_advantages(rewards)
    if degenerate:
        assert np.all(adv == 0)
    else:
        assert abs(adv.mean()) < 1e-9
        assert abs(adv.std() - 1) < 1e-9
        order = np.argsort(rewards, kind="stable")
        assert np.all(np.diff(adv[order]) >= -1e-12)


def test_constant_rewards_are_degenerate():
    adv, degenerate = normalize_advantages([0.3] * 5)
    assert degenerate and np.all(adv == 0)


# optimizer

def _param(value, name="w"):
    p = ad.Parameter(np.array(value, dtype=float), name)
    return p


def test_adamw_zero_gradient_without_decay_is_noop():
    p = _param([1.0, -2.0])
    p.grad = np.zeros(2)
    adamw_step(OptimizerState(0.1, 0.0), [("w", p)])
    assert np.array_equal(p.data, [1.0, -2.0])


def test_adamw_first_step_moves_by_learning_rate():
    p = _param([1.0, 1.0])
    p.grad = np.array([0.3, -4.0])
    adamw_step(OptimizerState(0.1, 0.0), [("w", p)])
    assert np.allclose(p.data, [0.9, 1.1], atol=1e-6)


def test_adamw_decoupled_decay():
    p, b = _param([1.0]), _param([1.0])
    p.grad, b.grad = np.zeros(1), np.zeros(1)
    adamw_step(OptimizerState(0.1, 0.01), [("layer.weight", p), ("layer.bias", b)])
    assert p.data[0] == pytest.approx(0.999, abs=1e-15)
    assert b.data[0] == 1.0


def test_adamw_moment_buffers(h2_exact):
    model = CircuitPolicy(small_model(h2_exact))
    params = list(model.named_parameters())
    for _, p in params:
        p.grad = np.ones_like(p.data)
    state = OptimizerState(1e-3, 0.01)
    adamw_step(state, params)
    adamw_step(state, params)
    assert state.step == 2
    for name, p in params:
        assert state.first_moment[name].shape == p.shape == state.second_moment[name].shape


# scoring

def test_identity_circuit_scores_hf(h2):
    problem = Problem(h2, angle_grid=[0.0, 0.1], qsci=QSCIConfig(n_shots=None))
    zero = [t for t in range(problem.vocab.size) if problem.vocab.token(t)[1] == 0.0]
    (s,) = score_batch(problem, [[zero[0]] * 4], seed=0)
    assert s.energy == pytest.approx(H2_HF, abs=1e-10)
    assert s.reward == pytest.approx(-H2_HF, abs=1e-10)
    assert s.hf_in_subspace


def test_identical_sequences_score_identically(h2_sampled):
    seq = [3, 7, 11, 2]
    a, b = score_batch(h2_sampled, [seq, seq], seed=5)
    c, d = score_batch(h2_sampled, [seq, seq], seed=5)
    assert a.energy == c.energy and b.energy == d.energy


def test_sandwich_holds_for_random_circuits(h2_sampled, rng):
    before = h2_sampled.sandwich_checks
    seqs = rng.integers(0, h2_sampled.vocab.size, (20, 4)).tolist()
    for s in score_batch(h2_sampled, seqs, seed=1):
        assert H2_CASCI - 1e-9 <= s.energy
        if s.hf_in_subspace:
            assert s.energy <= H2_HF + 1e-9
    assert h2_sampled.sandwich_checks == before + 20


# training loop

def test_training_metrics_and_files(h2_sampled, tmp_path):
    result = train(h2_sampled, small_model(h2_sampled), FAST, seed=3, out_dir=tmp_path)
    lines = [json.loads(line) for line in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert len(lines) == FAST.n_iterations
    keys = {"iter", "best_energy", "batch_min", "batch_mean", "loss", "mean_ratio", "grad_norm", "skipped", "seconds"}
    assert set(lines[0]) == keys
    best = [m["best_energy"] for m in lines]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    assert all(m["best_energy"] <= m["batch_min"] for m in lines)
    for name in ("checkpoint_0002", "checkpoint_0004", "checkpoint_final"):
        assert list(tmp_path.glob(name + ".*"))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["best_energy"] == result.best_energy
    model, meta = load_policy(tmp_path / "checkpoint_final")
    assert meta["iteration"] == FAST.n_iterations
    for (n1, p1), (n2, p2) in zip(model.named_parameters(), result.model.named_parameters()):
        assert n1 == n2 and np.array_equal(p1.data, p2.data)


def _strip(metrics):
    return [{k: v for k, v in m.items() if k != "seconds"} for m in metrics]


def test_training_is_seed_deterministic(h2_sampled):
    a = train(h2_sampled, small_model(h2_sampled, "gpt2"), FAST, seed=11)
    b = train(h2_sampled, small_model(h2_sampled, "gpt2"), FAST, seed=11)
    assert _strip(a.metrics) == _strip(b.metrics)
    assert a.best_tokens == b.best_tokens
    for p, q in zip(a.model.parameters(), b.model.parameters()):
        assert np.array_equal(p.data, q.data)


def test_pool_size_mismatch(h2_exact):
    cfg = ModelConfig(n_tokens=5, seq_len=4, d_model=16, n_heads=2, n_layers=1)
    with pytest.raises(ValueError):
        train(h2_exact, cfg, FAST)


class ConstantProblem(Problem):
    def score(self, tokens, seed=None):
        return ScoredCircuit(tuple(tokens), self.hf_energy, 1, True)


class BrokenProblem(Problem):
    def evaluate_record(self, record, d_max=None):
        return self.casci_energy - 1.0, None


def test_degenerate_batches_leave_parameters_untouched(h2):
    problem = ConstantProblem(h2, qsci=QSCIConfig(n_shots=None))
    cfg = small_model(problem)
    result = train(problem, cfg, FAST, seed=2)
    assert all(m["skipped"] for m in result.metrics)
    init_seed = int(np.random.SeedSequence(2).spawn(3)[0].generate_state(1)[0])
    fresh = CircuitPolicy(cfg, seed=init_seed)
    for p, q in zip(result.model.parameters(), fresh.parameters()):
        assert np.array_equal(p.data, q.data)


def test_numerical_failure_dumps_diagnostics(h2, tmp_path):
    problem = BrokenProblem(h2, qsci=QSCIConfig(n_shots=100))
    with pytest.raises(NumericalFailure):
        train(problem, small_model(problem), FAST, seed=0, out_dir=tmp_path)
    dump = json.loads((tmp_path / "failure.json").read_text())
    assert "E_CASCI" in dump["error"] and "tokens" in dump
