import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from slim.distributions import (
    Cauchy,
    Laplace,
    NotPositiveDefiniteError,
    RngStream,
    StudentT,
    jittered_cholesky,
    log_gaussian,
    random_gg_shape,
    sample_generalized_gaussian,
    sample_heavy_tailed,
    sample_inverse_gaussian,
)


def test_rng_stream_reproducible_and_independent():
    a = RngStream(7, 3).gen.random(5)
    b = RngStream(7, 3).gen.random(5)
    c = RngStream(7, 4).gen.random(5)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


def test_inverse_gaussian_moments():
    # closed form: mean mu, variance mu**3 / lam
    x = sample_inverse_gaussian(2.0, 3.0, RngStream(0), size=100_000)
    assert np.all(x > 0)
    assert abs(x.mean() - 2.0) < 0.03
    assert abs(x.var() / (8.0 / 3.0) - 1.0) < 0.05


def test_inverse_gaussian_concentrates_for_huge_shape():
    x = sample_inverse_gaussian(1.0, 1e9, RngStream(1), size=1000)
    assert np.all(np.abs(x - 1.0) < 1e-3)


@pytest.mark.parametrize("mu,lam", [(0.0, 1.0), (1.0, 0.0), (-1.0, 2.0)])
def test_inverse_gaussian_rejects_bad_parameters(mu, lam):
    with pytest.raises(ValueError):
        sample_inverse_gaussian(mu, lam, RngStream(0))


def test_inverse_gaussian_matches_scipy_distribution():
    x = sample_inverse_gaussian(1.5, 0.7, RngStream(2), size=50_000)
    # scipy invgauss(mu/lam, scale=lam) has mean mu and shape lam
    ks = stats.kstest(x, stats.invgauss(1.5 / 0.7, scale=0.7).cdf).statistic
    assert ks < 0.01


def test_laplace_mixture_matches_cdf():
    x = sample_heavy_tailed(Laplace(1.0), RngStream(3), size=100_000)
    assert stats.kstest(x, Laplace(1.0).cdf).statistic < 0.02


def test_laplace_variance_is_inverse_rate_squared():
    lam = 1.7
    x = sample_heavy_tailed(Laplace(lam), RngStream(4), size=100_000)
    assert abs(x.var() * lam**2 - 1.0) < 0.05


def test_cauchy_quantiles():
    x = sample_heavy_tailed(Cauchy(), RngStream(5), size=100_000)
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    assert abs(med) < 0.02
    assert abs(q1 + 1.0) < 0.03 and abs(q3 - 1.0) < 0.03


def test_student_t_large_dof_is_gaussian():
    x = sample_heavy_tailed(StudentT(1e6, 1.0), RngStream(6), size=100_000)
    assert stats.kstest(x, "norm").statistic < 0.02


def test_student_t_mixture_matches_cdf():
    kind = StudentT(3.0, 2.0)
    x = sample_heavy_tailed(kind, RngStream(7), size=100_000)
    assert stats.kstest(x, kind.cdf).statistic < 0.02


@pytest.mark.parametrize("bad", [Laplace, lambda v: StudentT(v, 1.0), lambda v: StudentT(1.0, v)])
def test_heavy_tailed_rejects_non_positive(bad):
    with pytest.raises(ValueError):
        bad(0.0)


def test_generalized_gaussian_shape_two_is_normal():
    x = sample_generalized_gaussian(2.0, RngStream(8), size=100_000)
    assert stats.kstest(x, "norm").statistic < 0.02


@pytest.mark.parametrize("shape", [0.5, 0.7, 1.0, 1.3, 1.8])
def test_generalized_gaussian_unit_variance(shape):
    x = sample_generalized_gaussian(shape, RngStream(9), size=100_000)
    assert abs(x.mean()) < 0.03
    assert abs(x.var() - 1.0) < 0.03


def test_generalized_gaussian_laplace_kurtosis():
    x = sample_generalized_gaussian(1.0, RngStream(10), size=100_000)
    assert abs(stats.kurtosis(x) - 3.0) < 0.3


@pytest.mark.parametrize("shape", [0.3, 2.5])
def test_generalized_gaussian_rejects_out_of_range(shape):
    with pytest.raises(ValueError):
        sample_generalized_gaussian(shape, RngStream(0))


def test_random_gg_shape_stays_in_ranges():
    gen = RngStream(11)
    shapes = np.array([random_gg_shape(gen) for _ in range(2000)])
    inside = ((shapes >= 0.5) & (shapes <= 0.8)) | ((shapes >= 1.2) & (shapes <= 2.0))
    assert inside.all()
    # uniform by length: 0.3 of 1.1 total falls in the lower interval
    assert abs((shapes <= 0.8).mean() - 0.3 / 1.1) < 0.04


def test_log_gaussian_scalar_values():
    assert log_gaussian([0.0], [0.0], [1.0]) == pytest.approx(-0.9189385, abs=1e-7)
    assert log_gaussian([0.0, 0.0], [0.0, 0.0], np.eye(2)) == pytest.approx(-np.log(2 * np.pi), abs=1e-12)


def test_log_gaussian_matches_dense_inverse():
    gen = np.random.default_rng(12)
    A = gen.standard_normal((5, 5))
    cov = A @ A.T + 0.5 * np.eye(5)
    x, m = gen.standard_normal(5), gen.standard_normal(5)
    r = x - m
    brute = -0.5 * (5 * np.log(2 * np.pi) + np.log(np.linalg.det(cov)) + r @ np.linalg.inv(cov) @ r)
    assert log_gaussian(x, m, cov) == pytest.approx(brute, abs=1e-9)


def test_log_gaussian_rejects_asymmetric_and_indefinite():
    with pytest.raises(ValueError):
        log_gaussian([0.0, 0.0], [0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        log_gaussian([0.0, 0.0], [0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_jittered_cholesky_rescues_semidefinite():
    v = np.ones((3, 1))
    L = jittered_cholesky(v @ v.T)
    assert np.allclose(L @ L.T, v @ v.T, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6))
def test_log_gaussian_permutation_invariant(seed, d):
    gen = np.random.default_rng(seed)
    A = gen.standard_normal((d, d))
    cov = A @ A.T + np.eye(d)
    x, m = gen.standard_normal(d), gen.standard_normal(d)
    p = gen.permutation(d)
    assert log_gaussian(x[p], m[p], cov[np.ix_(p, p)]) == pytest.approx(log_gaussian(x, m, cov), abs=1e-9)
