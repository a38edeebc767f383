"""Random variates and log densities used by the samplers and generators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln
from scipy.stats import t as student_t

LOG_2PI = float(np.log(2.0 * np.pi))


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Streams with different ids are statistically independent.  The wrapped
    ``numpy.random.Generator`` is available as ``.gen``.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


RngLike = Union[RngStream, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_inverse_gaussian(mu, lam, rng: RngLike = None, size=None):
    """Inverse Gaussian draws with mean ``mu`` and shape ``lam``.

    Transformation-with-rejection method, written so that the small root does
    not suffer cancellation when ``lam`` is large relative to ``mu``.
    """
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(~(mu > 0)) or np.any(~(lam > 0)):
        raise ValueError("inverse Gaussian needs mu > 0 and lam > 0")
    gen = as_generator(rng)
    shape = np.broadcast(mu, lam).shape if size is None else size
    y = gen.standard_normal(shape) ** 2
    t = mu * y / (2.0 * lam)
    x = mu / (1.0 + t + np.sqrt(t * t + 2.0 * t))
    u = gen.random(shape)
    out = np.where(u <= mu / (mu + x), x, mu * mu / x)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Laplace:
    """Laplace signal built as N(0, v) with v ~ Exponential(rate lam**2); variance 1/lam**2."""

    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"Laplace rate must be positive, got {self.lam}")

    @property
    def scale(self) -> float:
        """Scale b of the equivalent density exp(-|x|/b)/(2b)."""
        return 1.0 / (np.sqrt(2.0) * self.lam)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        b = self.scale
        return np.where(x < 0, 0.5 * np.exp(x / b), 1.0 - 0.5 * np.exp(-x / b))


@dataclass(frozen=True)
class StudentT:
    """Student-t signal built as N(0, sigma2 * v) with 1/v ~ Gamma(theta/2, rate theta/2)."""

    theta: float = 1.0
    sigma2: float = 1.0

    def __post_init__(self):
        if not (self.theta > 0 and self.sigma2 > 0):
            raise ValueError(f"Student-t needs theta > 0 and sigma2 > 0, got {self.theta}, {self.sigma2}")

    def cdf(self, x):
        return student_t.cdf(np.asarray(x, dtype=float), df=self.theta, scale=np.sqrt(self.sigma2))


def Cauchy(sigma2: float = 1.0) -> StudentT:
    return StudentT(1.0, sigma2)


def sample_mixing_scales(kind, rng: RngLike = None, size=None):
    """Draw the latent variances v of the scale mixture (prior draws)."""
    gen = as_generator(rng)
    if isinstance(kind, Laplace):
        return gen.exponential(1.0 / kind.lam**2, size)
    if isinstance(kind, StudentT):
        return kind.sigma2 / gen.gamma(kind.theta / 2.0, 2.0 / kind.theta, size)
    raise TypeError(f"unsupported signal kind {kind!r}")


def sample_heavy_tailed(kind, rng: RngLike = None, size=None):
    """Two-stage draw: mixing variance first, then a Gaussian with that variance."""
    gen = as_generator(rng)
    v = sample_mixing_scales(kind, gen, size)
    z = np.sqrt(v) * gen.standard_normal(np.shape(v))
    return z if size is not None else float(z)


GG_SHAPE_RANGE = (0.5, 2.0)


def sample_generalized_gaussian(shape: float, rng: RngLike = None, size=None):
    """Zero-mean unit-variance generalized Gaussian with density ~ exp(-|x/a|**shape).

    shape=1 is Laplace, shape=2 is Gaussian.
    """
    lo, hi = GG_SHAPE_RANGE
    if not lo <= shape <= hi:
        raise ValueError(f"generalized Gaussian shape must lie in [{lo}, {hi}], got {shape}")
    gen = as_generator(rng)
    a = np.exp(0.5 * (gammaln(1.0 / shape) - gammaln(3.0 / shape)))
    g = gen.gamma(1.0 / shape, 1.0, size)
    sign = np.where(gen.random(size) < 0.5, -1.0, 1.0)
    return a * sign * g ** (1.0 / shape)


def random_gg_shape(rng: RngLike = None, ranges=((0.5, 0.8), (1.2, 2.0))) -> float:
    """Shape drawn uniformly over a union of intervals (length weighted)."""
    gen = as_generator(rng)
    ranges = np.asarray(ranges, dtype=float)
    widths = ranges[:, 1] - ranges[:, 0]
    u = gen.random() * widths.sum()
    for (lo, hi), w in zip(ranges, widths):
        if u < w:
            return float(lo + u)
        u -= w
    return float(ranges[-1, 1])


def jittered_cholesky(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor; retries once with 1e-10 * trace / d added to the diagonal."""
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * np.trace(cov) / cov.shape[0]
    try:
        return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("covariance not positive definite after jitter") from exc


def log_gaussian(x, mean, cov) -> float:
    """log N(x | mean, cov); ``cov`` is a vector of variances or a full matrix."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.broadcast_to(np.asarray(mean, dtype=float), x.shape)
    cov = np.asarray(cov, dtype=float)
    r = x - mean
    d = x.shape[0]
    if cov.ndim <= 1:
        var = np.broadcast_to(cov, x.shape)
        if np.any(var <= 0):
            raise NotPositiveDefiniteError("non-positive variance")
        return float(-0.5 * (d * LOG_2PI + np.sum(np.log(var)) + np.sum(r * r / var)))
    if cov.shape != (d, d):
        raise ValueError(f"covariance shape {cov.shape} does not match dimension {d}")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise ValueError("covariance is not symmetric")
    L = jittered_cholesky(cov)
    a = solve_triangular(L, r, lower=True)
    return float(-0.5 * (d * LOG_2PI + a @ a) - np.sum(np.log(np.diag(L))))
