import numpy as np
import pytest

from lurkdim import harness
from lurkdim.harness import (
    CSV_FIELDS,
    SweepConfig,
    emit_csv,
    emit_ecdf,
    ks_uniform,
    pvalue_ecdf,
    read_csv,
    replication_stream,
    run_replication,
    run_sweep,
)
from lurkdim.models import get_model
from lurkdim.statkit import SingularCovariance

PIPE = get_model("pipe")


def sweep(n_grid=(50, 100), tau_grid=(0.0, 50.0), reps=12, seed=4, par=1, setup=None):
    return SweepConfig("pipe", setup or PIPE.setup(lurking=["eps_P"]), list(n_grid), list(tau_grid),
                       replications=reps, seed=seed, parallelism=par, case="eps")


def test_replication_deterministic():
    s = PIPE.setup()
    a = run_replication(PIPE, s, 60, replication_stream(1, 60, 0.0, 3))
    b = run_replication(PIPE, s, 60, replication_stream(1, 60, 0.0, 3))
    assert a.p_value == b.p_value and a.reject == b.reject
    np.testing.assert_array_equal(a.nu_hat, b.nu_hat)


def test_sweep_csv_byte_identical(tmp_path):
    a = emit_csv(run_sweep(sweep()), tmp_path / "a.csv", "pipe", "eps").read_bytes()
    b = emit_csv(run_sweep(sweep()), tmp_path / "b.csv", "pipe", "eps").read_bytes()
    assert a == b


def test_parallelism_does_not_change_results():
    serial = run_sweep(sweep(par=1))
    parallel = run_sweep(sweep(par=3))
    for x, y in zip(serial, parallel):
        np.testing.assert_array_equal(x.pvalues, y.pvalues)
        np.testing.assert_array_equal(x.mean_nu_hat, y.mean_nu_hat)


def test_deleting_a_cell_leaves_others_unchanged():
    full = run_sweep(sweep(n_grid=(50, 100), tau_grid=(0.0, 50.0)))
    part = run_sweep(sweep(n_grid=(100,), tau_grid=(50.0,)))
    np.testing.assert_array_equal(full[-1].pvalues, part[0].pvalues)
    assert (full[-1].n, full[-1].tau) == (100, 50.0)


def test_cell_invariants():
    for r in run_sweep(sweep()):
        assert r.rejections + r.failures == r.N == 12
        assert r.wilson_lo <= r.rate <= r.wilson_hi
        assert r.rate == r.rejections / r.N
        assert r.mean_nu_hat.shape == (3,)


def test_single_replication_cell():
    (r,) = run_sweep(sweep(n_grid=(20,), tau_grid=(0.0,), reps=1))
    assert r.rate in (0.0, 1.0)
    assert 0.0 <= r.wilson_lo < r.wilson_hi <= 1.0
    assert r.pvalue_var == 0.0


def test_pinned_sweep_reports_reduced_dimension():
    m = get_model("two_fluid")
    cfg = SweepConfig("two_fluid", m.setup(lurking=["mu_o"], pinned=["H"]), [30], replications=3)
    (r,) = run_sweep(cfg)
    assert r.mean_nu_hat.shape == (2,)


def test_degenerate_replications_are_counted(monkeypatch):
    real = harness.run_replication

    def flaky(model, setup, n, rng, alpha=0.05, cfg=None):
        if rng.stream_id[-1] % 3 == 0:
            raise SingularCovariance("forced")
        return real(model, setup, n, rng, alpha, cfg)

    monkeypatch.setattr(harness, "run_replication", flaky)
    (r,) = run_sweep(sweep(n_grid=(40,), tau_grid=(0.0,), reps=9))
    assert r.degenerate == 3 and r.N == 6


def test_config_validation():
    with pytest.raises(ValueError):
        run_sweep(sweep(n_grid=(3,)))
    with pytest.raises(ValueError):
        run_sweep(sweep(reps=0))
    with pytest.raises(ValueError):
        run_sweep(sweep(tau_grid=(-1.0,)))
    with pytest.raises(KeyError):
        run_sweep(SweepConfig("nope", PIPE.setup(), [10]))


# --- ECDF and KS ----------------------------------------------------------

def test_ecdf_single_point():
    assert pvalue_ecdf([0.5]) == [(0.5, 1.0)]
    with pytest.raises(ValueError):
        pvalue_ecdf([])


def test_ecdf_of_uniform_grid_hugs_diagonal():
    N = 200
    grid = (np.arange(N) + 0.5) / N
    pairs = pvalue_ecdf(grid[::-1])
    assert all(abs(p - e) <= 1 / N for p, e in pairs)
    assert [p for p, _ in pairs] == sorted(grid.tolist())
    assert ks_uniform(grid) == pytest.approx(0.5 / N)


def test_ks_detects_non_uniform():
    assert ks_uniform(np.full(100, 0.9)) == pytest.approx(0.9)


# --- CSV ------------------------------------------------------------------

def test_empty_results_header_only(tmp_path):
    text = emit_csv([], tmp_path / "e.csv", d=3).read_text()
    assert text == ",".join(CSV_FIELDS) + ",nu_hat_1,nu_hat_2,nu_hat_3\n"


def test_one_cell_two_lines(tmp_path):
    res = run_sweep(sweep(n_grid=(50,), tau_grid=(0.0,), reps=3))
    lines = emit_csv(res, tmp_path / "o.csv", "pipe", "eps").read_text().splitlines()
    assert len(lines) == 2
    assert lines[0].split(",") == list(CSV_FIELDS) + ["nu_hat_1", "nu_hat_2", "nu_hat_3"]
    assert lines[1].startswith("pipe,eps,50,0.0,3,")


def test_csv_round_trip(tmp_path):
    res = run_sweep(sweep())
    first = emit_csv(res, tmp_path / "1.csv", "pipe", "eps")
    model, case, back = read_csv(first)
    second = emit_csv(back, tmp_path / "2.csv", model, case)
    assert first.read_bytes() == second.read_bytes()
    assert back[0].pvalue_mean == res[0].pvalue_mean


def test_csv_error_names_path(tmp_path):
    bad = tmp_path / "missing" / "x.csv"
    with pytest.raises(OSError, match="missing"):
        emit_csv([], bad)


def test_ecdf_file(tmp_path):
    path = emit_ecdf([0.3, 0.1], tmp_path / "ecdf.csv")
    assert path.read_text() == "p_value,ecdf\n0.1,0.5\n0.3,1.0\n"
