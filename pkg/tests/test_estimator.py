import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gqkae import GQKAEEstimator
from conftest import DATA, H2_CASCI

FAST = dict(seq_len=3, d_model=16, n_heads=2, n_layers=1, d_latent=4, batch_size=4, n_iterations=3,
            learning_rate=1e-3, updates_per_batch=2, n_shots=500)


@pytest.fixture(scope="module")
def fitted(h2):
    return GQKAEEstimator(**FAST, random_state=1).fit(h2)


def test_fit_sets_attributes(fitted):
    assert fitted.n_tokens_ == 24
    assert len(fitted.history_) == 3
    assert fitted.best_energy_ == fitted.history_[-1]["best_energy"]
    assert fitted.reference_energy_ == pytest.approx(H2_CASCI, abs=1e-10)
    assert len(fitted.best_sequence_) == 3
    assert len(fitted.describe_best()) == 3


def test_predict_and_score(fitted, h2):
    assert fitted.predict() == fitted.best_energy_
    assert fitted.predict(h2) == fitted.best_energy_
    assert fitted.score() == pytest.approx(-abs(fitted.best_energy_ - H2_CASCI))
    assert fitted.score() <= 0


def test_predict_rejects_other_hamiltonian(fitted, dimer):
    with pytest.raises(ValueError):
        fitted.predict(dimer)


def test_accepts_path_and_text(h2):
    path = str(DATA / "h2_sto3g.fcidump")
    a = GQKAEEstimator(**FAST).fit(path)
    b = GQKAEEstimator(**FAST).fit((DATA / "h2_sto3g.fcidump").read_text())
    assert a.best_energy_ == b.best_energy_


def test_generate(fitted):
    out = fitted.generate(5, random_state=2)
    assert out.shape == (5, 3) and out.max() < fitted.n_tokens_
    assert np.array_equal(out, fitted.generate(5, random_state=2))
    assert np.array_equal(fitted.generate(2, greedy=True), fitted.generate(2, greedy=True, random_state=9))


def test_get_params_and_clone(fitted):
    params = fitted.get_params()
    assert params["d_model"] == 16 and params["random_state"] == 1
    twin = clone(fitted)
    assert twin.get_params() == params
    assert not hasattr(twin, "best_energy_")


def test_not_fitted():
    est = GQKAEEstimator()
    with pytest.raises(NotFittedError):
        est.predict()
    with pytest.raises(NotFittedError):
        est.generate(2)


@pytest.mark.parametrize("bad", [{"batch_size": 1}, {"d_model": 0}, {"learning_rate": -1.0}, {"n_heads": 3},
                                 {"ffn_variant": "mlp"}])
def test_invalid_parameters(h2, bad):
    with pytest.raises(ValueError):
        GQKAEEstimator(**{**FAST, **bad}).fit(h2)


def test_rejects_non_hamiltonian():
    with pytest.raises(TypeError):
        GQKAEEstimator().fit(np.zeros((3, 3)))
