import math

import numpy as np
import pytest
from scipy import optimize

from lurkdim import models
from lurkdim.dimensions import nondim_vector
from lurkdim.models import (
    GeometryError,
    NoConvergence,
    colebrook_f,
    evaluate,
    evaluate_batch,
    get_model,
    pipe_qoi,
    poiseuille_f,
    two_fluid_qoi,
)
from lurkdim.statkit import RngStream

from .oracles import colebrook_bisect, two_fluid_oracle


# --- friction factors -----------------------------------------------------

@pytest.mark.parametrize("Re,f", [(32.0, 1.0), (3200.0, 0.01), (1000.0, 0.032)])
def test_poiseuille(Re, f):
    assert abs(poiseuille_f(Re) - f) < 1e-15


def test_colebrook_residual_and_roughness():
    f = colebrook_f(1e5, 0.01)
    resid = 1 / math.sqrt(f) + 2 * math.log10(0.01 / 3.7 + 2.51 / (1e5 * math.sqrt(f)))
    assert abs(resid) < 1e-10
    assert f > colebrook_f(1e5, 0.0)


def test_colebrook_smooth_pipe_bisection():
    assert abs(colebrook_f(1e5, 0.0) - colebrook_bisect(1e5, 0.0)) < 1e-8


def test_colebrook_grid_against_bisection():
    Re = np.geomspace(4e3, 1e8, 5)
    R = np.linspace(0, 0.05, 5)
    RR, EE = np.meshgrid(Re, R)
    f = colebrook_f(RR, EE)
    for fi, re, r in zip(f.ravel(), RR.ravel(), EE.ravel()):
        assert abs(fi - colebrook_bisect(re, r)) < 1e-8
        assert abs(1 / math.sqrt(fi) + 2 * math.log10(r / 3.7 + 2.51 / (re * math.sqrt(fi)))) < 1e-10


def test_colebrook_iteration_cap(monkeypatch):
    monkeypatch.setattr(models, "COLEBROOK_MAX_ITER", 1)
    with pytest.raises(NoConvergence):
        colebrook_f(1e5, 0.01)


def test_colebrook_domain():
    with pytest.raises(ValueError):
        colebrook_f(-1.0, 0.0)


# --- pipe -----------------------------------------------------------------

def test_pipe_laminar_by_hand():
    assert abs(pipe_qoi(1.0, 1.0, 1.0, 1e-3, 1e-4) - 0.016) < 1e-15


def test_pipe_turbulent_independent_chain():
    lg = dict(rho=0.1682, U=5.7565, d=0.3965, mu=-11.3102, eps=-2.0999)
    rho, U, d, mu, eps = (10.0 ** lg[k] for k in ("rho", "U", "d", "mu", "eps"))
    Re = rho * U * d / mu
    assert Re > 1e6
    f = optimize.brentq(lambda f: 1 / math.sqrt(f) + 2 * math.log10(eps / d / 3.7 + 2.51 / (Re * math.sqrt(f))),
                        1e-5, 1.0, xtol=1e-16, rtol=1e-15)
    expected = f * 0.5 * rho * U * U / d
    assert abs(pipe_qoi(rho, U, d, mu, eps) / expected - 1) < 1e-10


@pytest.mark.parametrize("mu", [1e-3, 1e-6])
def test_pipe_density_viscosity_scaling(mu):
    base = pipe_qoi(1.2, 2.0, 0.5, mu, 1e-3)
    assert abs(pipe_qoi(2.4, 2.0, 0.5, 2 * mu, 1e-3) / base - 2.0) < 1e-12


def test_pipe_continuous_on_each_side_of_transition():
    mu = 1e-3
    U = lambda Re: Re * mu  # rho = d = 1
    for Re in (2999.0, 3001.0):
        a = pipe_qoi(1.0, U(Re), 1.0, mu, 1e-3)
        b = pipe_qoi(1.0, U(Re + 1e-6), 1.0, mu, 1e-3)
        assert abs(a - b) < 1e-6 * a
    lam = pipe_qoi(1.0, U(2999.999999), 1.0, mu, 1e-3)
    turb = pipe_qoi(1.0, U(3000.0), 1.0, mu, 1e-3)
    assert turb > lam  # switching to Colebrook raises friction here


def test_pipe_vectorized_matches_scalar():
    rho = np.array([1.0, 1.2]); U = np.array([1.0, 400.0])
    out = pipe_qoi(rho, U, 1.5, 1e-3, 0.1)
    assert out[0] == pipe_qoi(1.0, 1.0, 1.5, 1e-3, 0.1)
    assert out[1] == pipe_qoi(1.2, 400.0, 1.5, 1e-3, 0.1)


# --- two-fluid -------------------------------------------------------------

def test_two_fluid_plane_poiseuille():
    G, H, mu = 3.0, 1.7, 0.4
    assert abs(two_fluid_qoi(G, 0.0, H, 2.0, mu) / (G * H**3 / (12 * mu)) - 1) < 1e-12
    assert abs(two_fluid_oracle(G, 0.0, H, 2.0, mu) / (G * H**3 / (12 * mu)) - 1) < 1e-10


def test_two_fluid_equal_viscosities():
    G, H, mu = 2.0, 1.0, 0.7
    # inner flux of a single fluid differs with h; compare with the oracle, not with h = 0
    for h in (0.05, 0.2, 0.4):
        assert abs(two_fluid_qoi(G, h, H, mu, mu) / two_fluid_oracle(G, h, H, mu, mu) - 1) < 1e-10


def test_two_fluid_random_points_match_integration():
    rng = np.random.default_rng(8)
    for _ in range(100):
        G = 10 ** rng.uniform(-1, 2)
        H = 10 ** rng.uniform(-1, 1)
        h = rng.uniform(0, 0.49) * H
        mu_o, mu_i = 10 ** rng.uniform(-2, 2, size=2)
        got = two_fluid_qoi(G, h, H, mu_o, mu_i)
        assert abs(got / two_fluid_oracle(G, h, H, mu_o, mu_i) - 1) < 1e-8


def test_two_fluid_densities_unused():
    a = two_fluid_qoi(2.0, 0.1, 1.0, 1.0, 3.0, 1.0, 1.0)
    b = two_fluid_qoi(2.0, 0.1, 1.0, 1.0, 3.0, 10.0, 10.0)
    assert a == b


def test_two_fluid_geometry():
    with pytest.raises(GeometryError):
        two_fluid_qoi(1.0, 0.5, 1.0, 1.0, 1.0)


def test_inner_viscosity_is_a_weak_lever():
    m = get_model("two_fluid")
    z = np.exp(m.nominal_log)
    i_o, i_i = m.index(["mu_o", "mu_i"])
    eps = 1e-6

    def dlog(i):
        up, dn = z.copy(), z.copy()
        up[i] *= math.exp(eps)
        dn[i] *= math.exp(-eps)
        return (m.qoi(up)[0] - m.qoi(dn)[0]) / (2 * eps)

    assert abs(dlog(i_i)) < 0.1 * abs(dlog(i_o))


# --- model registry and virtual experiments --------------------------------

@pytest.mark.parametrize("name", ["pipe", "two_fluid"])
def test_full_models_are_homogeneous(name):
    m = get_model(name)
    nondim_vector(m.D, m.dq)
    assert m.D.shape[1] == len(m.variable_names) == m.nominal_log.size


def test_unknown_model():
    with pytest.raises(KeyError):
        get_model("nope")


def test_evaluate_matches_direct_call():
    m = get_model("pipe")
    s = m.setup(lurking=["eps_P"])
    x = s.design(m).mu
    obs = evaluate(m, s, x, RngStream(0))
    z = np.exp(m.nominal_log)
    assert abs(obs.q_obs / pipe_qoi(*z) - 1) < 1e-12


def test_evaluate_noise_reproducible():
    m = get_model("pipe")
    s = m.setup(tau=5.0)
    X = s.design(m).mu + np.zeros((4, 5))
    a = evaluate_batch(m, s, X, RngStream(1))
    b = evaluate_batch(m, s, X, RngStream(1))
    np.testing.assert_array_equal(a, b)
    clean = evaluate_batch(m, s.with_tau(0.0), X, RngStream(1))
    assert np.all(a != clean)
    np.testing.assert_array_equal(clean, evaluate_batch(m, s.with_tau(0.0), X, RngStream(9)))


def test_setup_partition_validation():
    m = get_model("pipe")
    from lurkdim.models import ExperimentSetup

    with pytest.raises(ValueError):
        ExperimentSetup((0, 1), (2,), ()).validate(m)
    with pytest.raises(ValueError):
        ExperimentSetup((0, 1, 2, 3, 4), (4,), ()).validate(m)
    with pytest.raises(ValueError):
        m.setup(lurking=list(m.variable_names))
