"""Lurking-variable detection from sampled experiments.

The exposed log-inputs are drawn from a known Gaussian design, the qoi is
non-dimensionalized with the canonical exposed-variable power product, and
Stein's identity turns point evaluations into estimates of the dimension
vector ``D_ex * E[grad pi]``. Under the no-lurking null that vector is zero;
Hotelling's T^2 tests it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import statkit
from .dimensions import DimMatrix, DimVector, DimensionError, nondim_vector, pinned_complement
from .statkit import GaussianDesign, hotelling_t2, t2_critical, t2_pvalue

K_MAX = 1.0 - 1e-12


@dataclass(frozen=True)
class DetectionConfig:
    D_ex: DimMatrix
    dq: DimVector
    design: GaussianDesign
    w_ex: tuple[Fraction, ...] | None = None
    alpha: float = 0.05
    D_pin: DimMatrix | None = None
    log_base: float = math.e

    def __post_init__(self):
        p = self.D_ex.shape[1]
        if self.w_ex is None:
            object.__setattr__(self, "w_ex", nondim_vector(self.D_ex, self.dq))
        w = tuple(Fraction(v) for v in self.w_ex)
        object.__setattr__(self, "w_ex", w)
        if len(w) != p:
            raise DimensionError(f"w_ex has {len(w)} entries for {p} exposed variables")
        Dw = [sum((row[j] * w[j] for j in range(p)), Fraction(0)) for row in self.D_ex.rows()]
        if tuple(Dw) != self.dq.exponents:
            raise DimensionError("D_ex @ w_ex does not reproduce the qoi dimensions")
        if self.design.dim != p:
            raise ValueError(f"design covers {self.design.dim} variables, D_ex has {p}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.D_pin is not None and self.D_pin.basis != self.D_ex.basis:
            raise DimensionError("pinned and exposed matrices use different bases")
        if self.log_base <= 0 or self.log_base == 1:
            raise ValueError("log_base must be positive and not 1")

    @property
    def w_float(self) -> np.ndarray:
        return np.array([float(v) for v in self.w_ex])

    def pin_basis(self) -> np.ndarray | None:
        if self.D_pin is None or self.D_pin.shape[1] == 0:
            return None
        return pinned_complement(self.D_pin)


@dataclass(frozen=True)
class SteinScores:
    G: np.ndarray
    projected: bool = False

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def dim(self) -> int:
        return self.G.shape[1]


@dataclass(frozen=True)
class TestReport:
    t2: float
    dof_num: int
    dof_den: int
    critical: float
    p_value: float
    reject: bool
    alpha: float
    nu_hat: np.ndarray
    n: int
    nu_hat_unit: np.ndarray | None = field(default=None)

    __test__ = False  # not a pytest class

    def as_dict(self) -> dict:
        out = {
            "t2": self.t2,
            "dof_num": self.dof_num,
            "dof_den": self.dof_den,
            "critical": self.critical,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "n": self.n,
        }
        for i, v in enumerate(self.nu_hat, 1):
            out[f"nu_hat_{i}"] = float(v)
        if self.nu_hat_unit is not None:
            for i, v in enumerate(self.nu_hat_unit, 1):
                out[f"nu_hat_unit_{i}"] = float(v)
        return out


def nondimensionalize(X: np.ndarray, q_obs: np.ndarray, cfg: DetectionConfig) -> np.ndarray:
    """``pi_obs = q_obs * base^(-w_ex . x)``."""
    return q_obs * np.power(cfg.log_base, -(X @ cfg.w_float))


def stein_scores(X: np.ndarray, q_obs: np.ndarray, cfg: DetectionConfig) -> SteinScores:
    """Rows ``g_i = D_ex Sigma^-1 (x_i - mu) pi_obs_i``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    q_obs = np.asarray(q_obs, dtype=float).reshape(-1)
    if X.shape[0] != q_obs.shape[0]:
        raise ValueError(f"{X.shape[0]} input rows but {q_obs.shape[0]} responses")
    if X.shape[1] != cfg.design.dim:
        raise ValueError(f"inputs have {X.shape[1]} columns, design expects {cfg.design.dim}")
    pi_obs = nondimensionalize(X, q_obs, cfg)
    score = (X - cfg.design.mu) / cfg.design.sigma**2
    G = (score * pi_obs[:, None]) @ cfg.D_ex.to_float().T
    return SteinScores(G, projected=False)


def run_test(scores: SteinScores, alpha: float = 0.05) -> TestReport:
    G = scores.G
    n, d = G.shape
    t2, stats = hotelling_t2(G)
    crit = t2_critical(d, n, alpha)
    p = t2_pvalue(t2, d, n)
    reject = t2 >= crit
    if reject != (p <= alpha):
        # only reachable when t2 sits within rounding of the critical value
        reject = p <= alpha
    nu = stats.mean
    norm = float(np.linalg.norm(nu))
    unit = nu / norm if norm > 0 else None
    return TestReport(
        t2=t2, dof_num=d, dof_den=n - d, critical=crit, p_value=p, reject=bool(reject),
        alpha=alpha, nu_hat=nu, n=n, nu_hat_unit=unit,
    )


def project_scores(scores: SteinScores, W_pin: np.ndarray) -> SteinScores:
    if scores.projected:
        raise ValueError("scores are already projected")
    return SteinScores(scores.G @ W_pin, projected=True)


def run_pinned_test(scores_raw: SteinScores, W_pin: np.ndarray, alpha: float = 0.05) -> TestReport:
    """T^2 test on ``W_pin^T g_i``; the statistic's dimension drops to ``d - r_pin``."""
    return run_test(project_scores(scores_raw, np.asarray(W_pin, dtype=float)), alpha)


def detect(X: np.ndarray, q_obs: np.ndarray, cfg: DetectionConfig) -> TestReport:
    """Full experimental procedure, pinned-aware."""
    scores = stein_scores(X, q_obs, cfg)
    W = cfg.pin_basis()
    if W is None:
        return run_test(scores, cfg.alpha)
    return run_pinned_test(scores, W, cfg.alpha)


def noncentrality(k: float, n: int) -> float:
    return n * (k + k * k / (1.0 - k))


def predict_power(k: float, n: int, d: int, alpha: float = 0.05) -> float:
    """Power of the T^2 test when ``k = nu^T E[g g^T]^-1 nu``."""
    if not 0.0 <= k < 1.0:
        raise ValueError(f"k={k} outside [0, 1)")
    if n <= d:
        raise statkit.TooFewSamples(f"need n > d, got n={n}, d={d}")
    crit = statkit.f_quantile(d, n - d, 1.0 - alpha)
    if k == 0.0:
        return alpha
    return statkit.noncentral_f_sf(d, n - d, noncentrality(k, n), crit)


def estimate_k(scores: SteinScores) -> float:
    G = scores.G
    n, d = G.shape
    if n <= d:
        raise statkit.TooFewSamples(f"need n > d, got n={n}, d={d}")
    gbar = G.mean(axis=0)
    if not np.any(gbar):
        return 0.0
    M = G.T @ G / n
    try:
        k = float(gbar @ cho_solve(cho_factor(M), gbar))
    except np.linalg.LinAlgError:
        # gbar always lies in range(M), so the pseudo-inverse form is exact
        k = float(gbar @ np.linalg.lstsq(M, gbar, rcond=None)[0])
    return min(max(k, 0.0), K_MAX)


def compare_direction(nu_hat: Sequence[float], D_lu: DimMatrix | Sequence[float], W_pin: np.ndarray | None = None) -> float:
    """Cosine between an estimated dimension vector and a lurking column.

    With ``W_pin`` the column is first projected onto the complement of the
    pinned dimensions, ``W W^T d_lu``.
    """
    nu = np.asarray(nu_hat, dtype=float).reshape(-1)
    if isinstance(D_lu, DimMatrix):
        if D_lu.shape[1] != 1:
            raise ValueError("compare_direction expects a single lurking column")
        ref = D_lu.to_float()[:, 0]
    else:
        ref = np.asarray(D_lu, dtype=float).reshape(-1)
    if W_pin is not None:
        W = np.asarray(W_pin, dtype=float)
        ref = W @ (W.T @ ref)
        if nu.size == W.shape[1]:
            nu = W @ nu
    if nu.size != ref.size:
        raise ValueError(f"nu_hat has {nu.size} entries, lurking column has {ref.size}")
    nn, nr = np.linalg.norm(nu), np.linalg.norm(ref)
    if nn == 0 or nr == 0:
        raise ValueError("cannot compare directions of zero-length vectors")
    return float(nu @ ref / (nn * nr))


def projected_reference(D_lu_column: Sequence[float], W_pin: np.ndarray | None, length: float) -> np.ndarray:
    """``W W^T d_lu`` rescaled to ``length`` (the comparison vector for a nu estimate)."""
    ref = np.asarray(D_lu_column, dtype=float)
    if W_pin is not None:
        ref = W_pin @ (W_pin.T @ ref)
    return ref * (length / np.linalg.norm(ref))
