"""Statistical kernels: seeded streams, Gaussian designs, F distributions,
Hotelling's T^2 and Wilson intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import brentq

CF_EPS = 1e-15
BETA_MAX_ITER = 500
POISSON_TAIL = 1e-12
SINGULAR_RATIO = 1e-12


class ConvergenceError(ArithmeticError):
    pass


class SingularCovariance(np.linalg.LinAlgError):
    """Sample covariance of the scores is (numerically) singular."""


class TooFewSamples(ValueError):
    pass


class RngStream:
    """Single-owner normal/uniform stream keyed by ``(seed, *stream_id)``.

    Backed by numpy's PCG64 seeded through ``SeedSequence``, so distinct keys
    give independent streams and identical keys give identical draws.
    """

    def __init__(self, seed: int, *stream_id: int):
        if seed < 0 or any(k < 0 for k in stream_id):
            raise ValueError("seed and stream ids must be non-negative")
        self.seed = int(seed)
        self.stream_id = tuple(int(k) for k in stream_id)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, *self.stream_id])))

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, *self.stream_id, *key)


@dataclass(frozen=True)
class GaussianDesign:
    """Independent normal sampling design in log space."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        if mu.shape != sigma.shape:
            raise ValueError(f"mu has {mu.size} entries but sigma has {sigma.size}")
        if not np.all(sigma > 0):
            raise ValueError("design standard deviations must be strictly positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.mu.size

    def subset(self, idx) -> "GaussianDesign":
        idx = list(idx)
        return GaussianDesign(self.mu[idx], self.sigma[idx])


@dataclass(frozen=True)
class SampleStats:
    mean: np.ndarray
    cov: np.ndarray
    n: int


def sample_design(design: GaussianDesign, n: int, rng: RngStream) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be non-negative")
    return design.mu + design.sigma * rng.normal((n, design.dim))


def _beta_cf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < CF_EPS:
            return h
    raise ConvergenceError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def _f_to_beta(d1: float, d2: float, x: float) -> tuple[float, float]:
    # y = d1 x / (d1 x + d2) and its complement, each without cancellation
    den = d1 * x + d2
    return d1 * x / den, d2 / den


def f_cdf(d1: int, d2: int, x: float) -> float:
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    y, _ = _f_to_beta(d1, d2, x)
    return reg_inc_beta(d1 / 2.0, d2 / 2.0, y)


def f_sf(d1: int, d2: int, x: float) -> float:
    """Upper tail ``P(F > x)``, computed directly for accuracy near 0."""
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    _, yc = _f_to_beta(d1, d2, x)
    return reg_inc_beta(d2 / 2.0, d1 / 2.0, yc)


def f_quantile(d1: int, d2: int, prob: float) -> float:
    if not 0.0 < prob < 1.0:
        raise ValueError("prob must lie in (0, 1)")
    lo, hi = 0.0, 1.0
    while f_cdf(d1, d2, hi) < prob:
        lo, hi = hi, hi * 2.0
    return brentq(lambda x: f_cdf(d1, d2, x) - prob, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def _poisson_logpmf(j: int, lam: float) -> float:
    return j * math.log(lam) - lam - math.lgamma(j + 1)


def _noncentral_f_sum(d1: int, d2: int, delta: float, x: float, upper: bool) -> float:
    if delta < 0:
        raise ValueError("noncentrality must be non-negative")
    if delta == 0:
        return f_sf(d1, d2, x) if upper else f_cdf(d1, d2, x)
    if x <= 0:
        return 1.0 if upper else 0.0
    y, yc = _f_to_beta(d1, d2, x)
    lam = delta / 2.0
    a, b = d1 / 2.0, d2 / 2.0

    def term(j):
        w = math.exp(_poisson_logpmf(j, lam))
        if upper:
            return w, w * reg_inc_beta(b, a + j, yc)
        return w, w * reg_inc_beta(a + j, b, y)

    mode = int(lam)
    w, total = term(mode)
    mass = w
    up, down = mode + 1, mode - 1
    while 1.0 - mass > POISSON_TAIL:
        if up - down > 100_000:
            raise ConvergenceError(f"Poisson mixture did not converge (delta={delta})")
        # expand toward the heavier neighbour so the bound tightens fastest
        w_up = math.exp(_poisson_logpmf(up, lam))
        w_down = math.exp(_poisson_logpmf(down, lam)) if down >= 0 else -1.0
        if w_down >= w_up:
            w, t = term(down)
            down -= 1
        else:
            w, t = term(up)
            up += 1
        mass += w
        total += t
    return min(max(total, 0.0), 1.0)


def noncentral_f_cdf(d1: int, d2: int, delta: float, x: float) -> float:
    """Noncentral F CDF as a Poisson mixture of central beta terms."""
    return _noncentral_f_sum(d1, d2, delta, x, upper=False)


def noncentral_f_sf(d1: int, d2: int, delta: float, x: float) -> float:
    return _noncentral_f_sum(d1, d2, delta, x, upper=True)


def sample_stats(G: np.ndarray) -> SampleStats:
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    mean = G.mean(axis=0)
    centered = G - mean
    cov = centered.T @ centered / (n - 1)
    return SampleStats(mean, (cov + cov.T) / 2.0, n)


def _whitened_mean(stats: SampleStats) -> np.ndarray:
    """Solve ``L z = mean`` with ``S = L L^T`` after scaling S to unit diagonal."""
    S = stats.cov
    diag = np.diag(S)
    if not np.all(np.isfinite(S)) or np.any(diag <= 0):
        raise SingularCovariance("score covariance has a zero-variance component")
    scale = np.sqrt(diag)
    C = S / np.outer(scale, scale)
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("score covariance is not positive definite") from exc
    piv = np.diag(L) ** 2
    if piv.min() < SINGULAR_RATIO * piv.max():
        raise SingularCovariance(f"score covariance pivot ratio {piv.min() / piv.max():.3g} below {SINGULAR_RATIO}")
    return solve_triangular(L, stats.mean / scale, lower=True)


def hotelling_t2(G: np.ndarray) -> tuple[float, SampleStats]:
    """``t^2 = n gbar^T S^{-1} gbar`` with S the unbiased sample covariance."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2:
        raise ValueError("G must be an n x d matrix")
    n, d = G.shape
    if n <= d:
        raise TooFewSamples(f"need n > d samples, got n={n}, d={d}")
    stats = sample_stats(G)
    if not np.any(stats.mean):
        # exactly zero mean gives t2 = 0 whatever S is, including S = 0
        return 0.0, stats
    z = _whitened_mean(stats)
    return float(n * (z @ z)), stats


def t2_scale(d: int, n: int) -> float:
    return d * (n - 1) / (n - d)


def t2_pvalue(t2: float, d: int, n: int) -> float:
    if n <= d:
        raise TooFewSamples(f"need n > d samples, got n={n}, d={d}")
    return f_sf(d, n - d, t2 / t2_scale(d, n))


def t2_critical(d: int, n: int, alpha: float) -> float:
    return t2_scale(d, n) * f_quantile(d, n - d, 1.0 - alpha)


def normal_quantile(p: float) -> float:
    return NormalDist().inv_cdf(p)


def wilson_interval(Nr: int, N: int, conf: float = 0.95) -> tuple[float, float]:
    if N < 1 or not 0 <= Nr <= N:
        raise ValueError(f"need 0 <= Nr <= N and N >= 1, got Nr={Nr}, N={N}")
    z = normal_quantile(1.0 - (1.0 - conf) / 2.0)
    z2 = z * z
    Nf = N - Nr
    center = Nr + z2 / 2.0
    half = z * math.sqrt(Nr * Nf / N + z2 / 4.0)
    lo = 0.0 if Nr == 0 else max(0.0, (center - half) / (N + z2))
    hi = 1.0 if Nf == 0 else min(1.0, (center + half) / (N + z2))
    return lo, hi
