import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisydiff.errors import InsufficientBlocks, TuningOutOfRange
from noisydiff.model import SamplingScheme
from noisydiff.preprocess import derive_tuning, estimate_noise_variance, local_means
from noisydiff.simulate import ObservationSeries


def series(values, p, h=0.01):
    values = np.asarray(values, dtype=float)
    n = values.shape[0] - 1
    return ObservationSeries(values, SamplingScheme(n=n, h_n=h, tau=1.5, p_n=p))


@pytest.mark.parametrize(
    "n,h,p,k",
    [
        (10**6, 6.31e-5, 162, 6172),
        (8_352_000, 6.94e-6, 518, 16123),
        (34_560_000, 6.94e-6, 518, 66718),
    ],
)
def test_derive_tuning_table_values(n, h, p, k):
    s = derive_tuning(n, h, 1.9)
    assert (s.p_n, s.k_n) == (p, k)
    assert s.T_n == pytest.approx(n * h)
    assert s.delta_n == pytest.approx(p * h)


def test_derive_tuning_horizon():
    assert derive_tuning(10**6, 6.31e-5, 1.9).T_n == pytest.approx(63.1)


@pytest.mark.parametrize("tau", [1.0, 2.0, 0.5, 2.5])
def test_derive_tuning_tau_range(tau):
    with pytest.raises(TuningOutOfRange):
        derive_tuning(1000, 0.01, tau)


def test_derive_tuning_too_few_blocks():
    with pytest.raises(InsufficientBlocks):
        derive_tuning(50, 1e-4, 1.9)


def test_local_means_constant():
    m = local_means(series(np.full(31, 2.5), p=5))
    assert m.k_n == 6
    assert np.all(m.means == 2.5)


def test_local_means_pairs():
    # n = 6 increments, p = 2: blocks (0,2), (4,6), (8,10); the last point is dropped
    m = local_means(series([0, 2, 4, 6, 8, 10, 12], p=2))
    np.testing.assert_array_equal(m.means[:, 0], [1, 5, 9])


def test_local_means_of_linear_series_step_by_delta():
    p, h = 7, 0.013
    y = np.arange(701) * h
    m = local_means(series(y, p=p, h=h))
    np.testing.assert_allclose(np.diff(m.means[:, 0]), p * h, rtol=1e-10)


def test_local_means_too_short():
    obs = ObservationSeries(np.zeros(31), SamplingScheme(n=30, h_n=0.01, tau=1.5, p_n=10))
    obs.values = obs.values[:25]  # fewer rows than the scheme promises
    with pytest.raises(InsufficientBlocks):
        local_means(obs)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(30, 300),
    st.integers(1, 9),
    st.floats(-3, 3),
    st.floats(-3, 3),
    st.integers(0, 2**31 - 1),
)
def test_local_means_linear(n, p, a, b, seed):
    if n // p < 3:
        return
    rng = np.random.default_rng(seed)
    y, z = rng.standard_normal((2, n + 1, 2))
    s = SamplingScheme(n=n, h_n=0.01, tau=1.5, p_n=p)
    lhs = local_means(ObservationSeries(a * y + b * z, s)).means
    rhs = a * local_means(ObservationSeries(y, s)).means + b * local_means(ObservationSeries(z, s)).means
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_noise_variance_constant_series_is_zero():
    lam = estimate_noise_variance(series(np.full((11, 2), 3.0), p=1)).lambda_hat
    assert np.array_equal(lam, np.zeros((2, 2)))


def test_noise_variance_alternating():
    v, n = 0.3, 40
    y = np.where(np.arange(n + 1) % 2 == 0, 0.0, v)
    lam = estimate_noise_variance(series(y, p=1)).lambda_hat
    assert lam[0, 0] == pytest.approx(v**2 / 2, rel=1e-14)


def test_noise_variance_matches_loop_and_is_time_reversible():
    rng = np.random.default_rng(4)
    y = rng.standard_normal((201, 3))
    lam = estimate_noise_variance(series(y, p=1)).lambda_hat
    ref = sum(np.outer(y[i + 1] - y[i], y[i + 1] - y[i]) for i in range(200)) / 400
    np.testing.assert_allclose(lam, ref, rtol=1e-12)
    np.testing.assert_allclose(estimate_noise_variance(series(y[::-1], p=1)).lambda_hat, lam, rtol=1e-12)
    assert np.min(np.linalg.eigvalsh(lam)) >= 0
    assert np.array_equal(lam, lam.T)


def test_pure_noise_block_variance():
    lam, p, k = 1e-3, 37, 2000
    rng = np.random.default_rng(5)
    y = np.sqrt(lam) * rng.standard_normal(k * p + 1)
    means = local_means(series(y, p=p)).means[:, 0]
    assert np.var(means, ddof=1) == pytest.approx(lam / p, rel=0.2)
