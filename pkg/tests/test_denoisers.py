import numpy as np
import pytest

from ftg.denoisers import (GaussianOracleDenoiser, ToyDenoiser,
                           oracle_epsilon, sinusoidal_embedding)
from ftg.errors import InvalidInputError
from ftg.pianoroll import ModelInput
from ftg.schedule import forward_noise, linear_schedule


def test_sinusoidal_embedding_shape_and_range():
    emb = sinusoidal_embedding(np.array([0, 1, 500]), 32, np.float64)
    assert emb.shape == (3, 32)
    assert np.abs(emb).max() <= 1.0
    assert not np.allclose(emb[1], emb[2])


def test_toy_denoiser_shapes_and_determinism():
    den = ToyDenoiser(width=4, temb_dim=8, seed=1)
    x = np.random.default_rng(0).standard_normal((3, 6, 5, 128)).astype(np.float32)
    t = np.array([1, 5, 9])
    y1, _ = den.forward(x, t)
    y2, _ = den.forward(x, t)
    assert y1.shape == (3, 2, 5, 128)
    np.testing.assert_array_equal(y1, y2)
    assert ToyDenoiser(width=4, temb_dim=8, seed=1).param_count == den.param_count


def test_toy_denoiser_time_conditioning_matters():
    den = ToyDenoiser(width=4, temb_dim=8, seed=1)
    x = np.random.default_rng(0).standard_normal((1, 6, 4, 128)).astype(np.float32)
    y1, _ = den.forward(x, np.array([1]))
    y2, _ = den.forward(x, np.array([50]))
    assert np.abs(y1 - y2).max() > 1e-6


def test_gradcheck_all_parameters():
    den = ToyDenoiser(width=3, temb_dim=6, seed=3, dtype=np.float64)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 6, 4, 5))
    t = np.array([2, 7])
    gy = rng.standard_normal((2, 2, 4, 5))
    _, cache = den.forward(x, t)
    grads = den.backward(cache, gy)

    def loss():
        y, _ = den.forward(x, t)
        return float((y * gy).sum())

    eps = 1e-6
    for name, p in den.params.items():
        flat = p.reshape(-1)
        idx = rng.choice(flat.size, size=min(10, flat.size), replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + eps
            up = loss()
            flat[i] = old - eps
            dn = loss()
            flat[i] = old
            num = (up - dn) / (2 * eps)
            assert grads[name].reshape(-1)[i] == pytest.approx(
                num, rel=1e-5, abs=1e-8), name


def test_predict_on_model_input():
    den = ToyDenoiser(width=4, temb_dim=8, seed=0)
    mi = ModelInput(np.zeros((6, 8, 128), dtype=np.float32))
    out = den.predict(mi, 3)
    assert out.data.shape == (2, 8, 128)


def test_non_finite_parameters_rejected():
    den = ToyDenoiser(width=4, temb_dim=8, seed=0)
    den.params["w2"][0, 0, 0, 0] = np.nan
    with pytest.raises(InvalidInputError):
        den._check_finite()


def test_oracle_epsilon_is_posterior_mean():
    """For x0 ~ N(mu, v) per cell and x_t = sqrt(ab) x0 + sqrt(1-ab) e, the
    conditional mean of e given x_t has the closed form the oracle uses;
    check it against a regression estimate from simulation."""
    sched = linear_schedule(T=100)
    mu, v, t = 3.0, 4.0, 60
    rng = np.random.default_rng(7)
    n = 200_000
    x0 = mu + np.sqrt(v) * rng.standard_normal(n)
    eps = rng.standard_normal(n)
    ab = sched.alpha_bar[t]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps
    pred = oracle_epsilon(x_t, t, sched, mu, v)
    # E[eps | x_t] is linear in x_t; bin x_t and compare conditional means
    order = np.argsort(x_t)
    for chunk in np.array_split(order, 20)[3:17]:
        assert pred[chunk].mean() == pytest.approx(eps[chunk].mean(), abs=0.02)


def test_gaussian_oracle_denoiser_ignores_condition_planes():
    sched = linear_schedule(T=100)
    den = GaussianOracleDenoiser(3.0, 2500.0, sched)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 6, 4, 8))
    y1 = den.predict_batch(x, 50)
    x2 = x.copy()
    x2[:, 2:] = 123.0
    np.testing.assert_array_equal(y1, den.predict_batch(x2, 50))
    x3 = x.copy()
    x3[:, :2] += 1.0
    assert np.abs(den.predict_batch(x3, 50) - y1).max() > 0
