"""Ground-truth physical models used as virtual experiments.

Two models ship: turbulent/laminar rough pipe flow (qoi: pressure gradient)
and two-fluid channel flow (qoi: inner-fluid flow rate per unit depth).
Variables are sampled in log space; lurking and pinned variables sit at
their nominal log values for the whole experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .dimensions import DimMatrix, DimVector, MLT
from .statkit import GaussianDesign, RngStream

RE_CRITICAL = 3000.0
COLEBROOK_TOL = 1e-13
COLEBROOK_MAX_ITER = 200


class NoConvergence(ArithmeticError):
    pass


class GeometryError(ValueError):
    pass


def poiseuille_f(Re):
    return 32.0 / Re


def _colebrook_rhs(y, Re, R):
    return -2.0 * np.log10(R / 3.7 + 2.51 * y / Re)


def colebrook_f(Re, R=0.0):
    """Colebrook friction factor by fixed-point iteration on ``y = 1/sqrt(f)``.

    Accepts scalars or arrays; raises :class:`NoConvergence` if any entry
    fails to settle within the iteration cap.
    """
    scalar = np.ndim(Re) == 0 and np.ndim(R) == 0
    Re, R = np.broadcast_arrays(np.asarray(Re, dtype=float), np.asarray(R, dtype=float))
    if np.any(Re <= 0) or np.any(R < 0):
        raise ValueError("Colebrook needs Re > 0 and R >= 0")
    y = np.full(Re.shape, 8.0)
    for _ in range(COLEBROOK_MAX_ITER):
        y_new = _colebrook_rhs(y, Re, R)
        done = np.abs(y_new - y) <= COLEBROOK_TOL * np.maximum(1.0, np.abs(y_new))
        y = y_new
        if np.all(done):
            break
    else:
        raise NoConvergence(f"Colebrook iteration did not converge in {COLEBROOK_MAX_ITER} steps")
    f = 1.0 / (y * y)
    return float(f) if scalar else f


def pipe_qoi(rho, U, d, mu, eps):
    """Pressure gradient dP/L for rough pipe flow.

    Laminar (Re < 3000) uses ``f = 32/Re``, turbulent uses Colebrook with
    relative roughness ``eps/d``; then ``dP/L = f * (rho U^2 / 2) / d``.
    """
    scalar = all(np.ndim(v) == 0 for v in (rho, U, d, mu, eps))
    rho, U, d, mu, eps = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (rho, U, d, mu, eps)))
    if np.any(rho <= 0) or np.any(U <= 0) or np.any(d <= 0) or np.any(mu <= 0) or np.any(eps <= 0):
        raise ValueError("pipe inputs must be positive")
    Re = rho * U * d / mu
    f = np.empty(Re.shape)
    lam = Re < RE_CRITICAL
    f[lam] = poiseuille_f(Re[lam])
    if np.any(~lam):
        f[~lam] = colebrook_f(Re[~lam], eps[~lam] / d[~lam])
    q = f * (0.5 * rho * U * U) / d
    return float(q) if scalar else q


def two_fluid_qoi(gradP, h, H, mu_o, mu_i, rho_o=None, rho_i=None):
    """Inner-fluid flow rate per unit depth for lubricated channel flow.

    Densities are accepted for a uniform call signature; the flow rate does
    not depend on them.
    """
    scalar = all(np.ndim(v) == 0 for v in (gradP, h, H, mu_o, mu_i))
    gradP, h, H, mu_o, mu_i = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (gradP, h, H, mu_o, mu_i))
    )
    if np.any(h < 0) or np.any(h >= H / 2.0):
        raise GeometryError("outer layer thickness must satisfy 0 <= h < H/2")
    Hh = H - h
    bracket = (
        ((Hh**3 - h**3) / 3.0)
        - 0.5 * H * (Hh**2 - h**2)
        - ((mu_o - mu_i) / mu_o) * (h * h - h * H) * (H - 2.0 * h)
    )
    q = -0.5 * gradP / mu_i * bracket
    return float(q) if scalar else q


@dataclass(frozen=True)
class ModelSpec:
    name: str
    variable_names: tuple[str, ...]
    D: DimMatrix
    dq: DimVector
    nominal_log: np.ndarray
    default_design: GaussianDesign
    log_base: float
    qoi_name: str
    qoi_fn: Callable[..., np.ndarray] = field(repr=False)
    description: str = ""

    def __post_init__(self):
        p = len(self.variable_names)
        if self.D.shape[1] != p or len(self.nominal_log) != p or self.default_design.dim != p:
            raise ValueError(f"model {self.name}: inconsistent variable counts")

    def index(self, names: Iterable[str]) -> tuple[int, ...]:
        out = []
        for n in names:
            if n not in self.variable_names:
                raise KeyError(f"model {self.name!r} has no variable {n!r}")
            out.append(self.variable_names.index(n))
        return tuple(out)

    def qoi(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        return np.asarray(self.qoi_fn(*Z.T), dtype=float)

    def setup(self, lurking: Sequence[str] = (), pinned: Sequence[str] = (), tau: float = 0.0,
              design_override: GaussianDesign | None = None) -> "ExperimentSetup":
        """Build a setup where every variable not lurking or pinned is exposed."""
        lu, pi = self.index(lurking), self.index(pinned)
        ex = tuple(i for i in range(len(self.variable_names)) if i not in lu and i not in pi)
        s = ExperimentSetup(ex, lu, pi, tau, design_override)
        s.validate(self)
        return s


@dataclass(frozen=True)
class ExperimentSetup:
    exposed: tuple[int, ...]
    lurking: tuple[int, ...] = ()
    pinned: tuple[int, ...] = ()
    tau: float = 0.0
    design_override: GaussianDesign | None = None

    def validate(self, model: ModelSpec) -> None:
        p = len(model.variable_names)
        allidx = list(self.exposed) + list(self.lurking) + list(self.pinned)
        if sorted(allidx) != list(range(p)):
            raise ValueError(f"exposed/lurking/pinned must partition the {p} variables of {model.name!r}")
        if not self.exposed:
            raise ValueError("at least one exposed variable is required")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.design_override is not None and self.design_override.dim != len(self.exposed):
            raise ValueError("design override must cover exactly the exposed variables")

    def with_tau(self, tau: float) -> "ExperimentSetup":
        return ExperimentSetup(self.exposed, self.lurking, self.pinned, tau, self.design_override)

    def design(self, model: ModelSpec) -> GaussianDesign:
        if self.design_override is not None:
            return self.design_override
        return model.default_design.subset(self.exposed)

    def names(self, model: ModelSpec, which: str = "exposed") -> list[str]:
        return [model.variable_names[i] for i in getattr(self, which)]


@dataclass(frozen=True)
class Observation:
    x_ex: np.ndarray
    q_obs: float


def _physical_inputs(model: ModelSpec, setup: ExperimentSetup, X_ex: np.ndarray) -> np.ndarray:
    X_ex = np.atleast_2d(np.asarray(X_ex, dtype=float))
    if X_ex.shape[1] != len(setup.exposed):
        raise ValueError(f"expected {len(setup.exposed)} exposed inputs, got {X_ex.shape[1]}")
    X = np.tile(model.nominal_log, (X_ex.shape[0], 1))
    X[:, list(setup.exposed)] = X_ex
    return np.power(model.log_base, X)


def evaluate_batch(model: ModelSpec, setup: ExperimentSetup, X_ex: np.ndarray, rng: RngStream) -> np.ndarray:
    """Noisy qoi for each row of log-space exposed inputs.

    One normal draw per row is always consumed, so streams stay aligned
    across noise levels.
    """
    Z = _physical_inputs(model, setup, X_ex)
    q = model.qoi(Z)
    noise = rng.normal(q.shape[0])
    if setup.tau > 0:
        q = q + setup.tau * noise
    return q


def evaluate(model: ModelSpec, setup: ExperimentSetup, x_ex, rng: RngStream) -> Observation:
    x_ex = np.asarray(x_ex, dtype=float).reshape(-1)
    q = evaluate_batch(model, setup, x_ex[None, :], rng)
    if not math.isfinite(q[0]):
        raise ArithmeticError(f"model {model.name} returned non-finite qoi")
    return Observation(x_ex, float(q[0]))


# Tabulated log-space means and standard deviations. The standard deviations
# are one sixth of each variable's log-range; the experiments sample with
# sd = log-range / sampling_factor.
PIPE_TABLE_MU = np.array([0.1682, 5.7565, 0.3965, -11.3102, -2.0999])
PIPE_TABLE_SIGMA = np.array([0.0561, 0.3838, 0.0448, 0.0676, 0.0676])
TWO_FLUID_TABLE_MU = np.array([1.0397, -1.7533, 0.3466, 0.3466, 3.8005, 0.3466, 1.4979])
TWO_FLUID_TABLE_SIGMA = np.array([0.3466, 0.1831, 0.1155, 0.1155, 0.0372, 0.1155, 0.0372])
TABLE_RANGE_DIVISOR = 6.0


def pipe_design(sampling_factor: float = 2.0) -> GaussianDesign:
    return GaussianDesign(PIPE_TABLE_MU, PIPE_TABLE_SIGMA * TABLE_RANGE_DIVISOR / sampling_factor)


def two_fluid_design(sampling_factor: float = 6.0) -> GaussianDesign:
    return GaussianDesign(TWO_FLUID_TABLE_MU, TWO_FLUID_TABLE_SIGMA * TABLE_RANGE_DIVISOR / sampling_factor)


def _build_pipe() -> ModelSpec:
    names = ("rho_F", "U_F", "d_P", "mu_F", "eps_P")
    D = DimMatrix.from_dict(
        {"rho_F": [1, -3, 0], "U_F": [0, 1, -1], "d_P": [0, 1, 0], "mu_F": [1, -1, -1], "eps_P": [0, 1, 0]}
    )
    return ModelSpec(
        name="pipe",
        variable_names=names,
        D=D,
        dq=DimVector((1, -2, -2), MLT),
        nominal_log=PIPE_TABLE_MU.copy(),
        default_design=pipe_design(),
        log_base=math.e,
        qoi_name="dPdL",
        qoi_fn=pipe_qoi,
        description="Rough pipe flow; qoi is the pressure gradient dP/L",
    )


def _build_two_fluid() -> ModelSpec:
    names = ("gradP", "h", "H", "mu_o", "mu_i", "rho_o", "rho_i")
    D = DimMatrix.from_dict(
        {
            "gradP": [1, -2, -2],
            "h": [0, 1, 0],
            "H": [0, 1, 0],
            "mu_o": [1, -1, -1],
            "mu_i": [1, -1, -1],
            "rho_o": [1, -3, 0],
            "rho_i": [1, -3, 0],
        }
    )
    return ModelSpec(
        name="two_fluid",
        variable_names=names,
        D=D,
        dq=DimVector((0, 2, -1), MLT),
        nominal_log=TWO_FLUID_TABLE_MU.copy(),
        default_design=two_fluid_design(),
        log_base=math.e,
        qoi_name="Q_d",
        qoi_fn=two_fluid_qoi,
        description="Two-fluid lubricated channel flow; qoi is inner flow rate per unit depth",
    )


MODELS: dict[str, ModelSpec] = {m.name: m for m in (_build_pipe(), _build_two_fluid())}


def get_model(name: str) -> ModelSpec:
    try:
        return MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {sorted(MODELS)}") from None
