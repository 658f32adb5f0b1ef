"""Monte Carlo driver for Type I error and power studies.

Each replication draws its own stream keyed by ``(seed, n, tau, replication)``
so results do not depend on scheduling, parallelism, or which other cells
are in the grid.
"""

from __future__ import annotations

import csv
import itertools
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .detect import DetectionConfig, detect
from .models import ExperimentSetup, ModelSpec, evaluate_batch, get_model
from .statkit import RngStream, SingularCovariance, sample_design, wilson_interval

CSV_FIELDS = (
    "model", "case", "n", "tau", "N", "rejections", "degenerate",
    "rate", "wilson_lo", "wilson_hi", "pvalue_mean", "pvalue_var",
)


def _tau_key(tau: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(tau)))[0]


def replication_stream(seed: int, n: int, tau: float, rep: int) -> RngStream:
    return RngStream(seed, n, _tau_key(tau), rep)


def detection_config(model: ModelSpec, setup: ExperimentSetup, alpha: float = 0.05) -> DetectionConfig:
    D_pin = model.D.take(setup.pinned) if setup.pinned else None
    return DetectionConfig(
        D_ex=model.D.take(setup.exposed),
        dq=model.dq,
        design=setup.design(model),
        alpha=alpha,
        D_pin=D_pin,
        log_base=model.log_base,
    )


def effective_dim(model: ModelSpec, setup: ExperimentSetup) -> int:
    cfg = detection_config(model, setup)
    W = cfg.pin_basis()
    return len(model.D.basis) if W is None else W.shape[1]


class Replication(NamedTuple):
    p_value: float
    reject: bool
    nu_hat: np.ndarray


def simulate_data(model: ModelSpec, setup: ExperimentSetup, n: int, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` design points and run the virtual experiment on them."""
    X = sample_design(setup.design(model), n, rng)
    q = evaluate_batch(model, setup, X, rng)
    return X, q


def run_replication(model: ModelSpec, setup: ExperimentSetup, n: int, rng: RngStream,
                    alpha: float = 0.05, cfg: DetectionConfig | None = None) -> Replication:
    cfg = cfg or detection_config(model, setup, alpha)
    X, q = simulate_data(model, setup, n, rng)
    rep = detect(X, q, cfg)
    return Replication(rep.p_value, rep.reject, rep.nu_hat)


@dataclass(frozen=True)
class SweepConfig:
    model: str
    setup: ExperimentSetup
    n_grid: Sequence[int]
    tau_grid: Sequence[float] = (0.0,)
    replications: int = 200
    alpha: float = 0.05
    seed: int = 0
    parallelism: int = 1
    case: str = "custom"

    def validate(self) -> ModelSpec:
        model = get_model(self.model)
        self.setup.validate(model)
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.n_grid or not self.tau_grid:
            raise ValueError("n_grid and tau_grid must be non-empty")
        d_eff = effective_dim(model, self.setup)
        bad = [n for n in self.n_grid if n <= d_eff]
        if bad:
            raise ValueError(f"sample counts {bad} do not exceed the test dimension {d_eff}")
        if any(t < 0 for t in self.tau_grid):
            raise ValueError("tau values must be non-negative")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        return model


@dataclass
class CellResult:
    n: int
    tau: float
    N: int
    rejections: int
    failures: int
    degenerate: int
    rate: float
    wilson_lo: float
    wilson_hi: float
    pvalue_mean: float
    pvalue_var: float
    mean_nu_hat: np.ndarray
    pvalues: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)


def _run_chunk(args) -> list[Replication | None]:
    model_name, setup, n, tau, alpha, seed, reps = args
    model = get_model(model_name)
    setup = setup.with_tau(tau)
    cfg = detection_config(model, setup, alpha)
    out: list[Replication | None] = []
    for r in reps:
        try:
            out.append(run_replication(model, setup, n, replication_stream(seed, n, tau, r), alpha, cfg))
        except SingularCovariance:
            out.append(None)
    return out


def _summarize(n: int, tau: float, reps: list[Replication | None], d: int) -> CellResult:
    ok = [r for r in reps if r is not None]
    degenerate = len(reps) - len(ok)
    N = len(ok)
    Nr = sum(1 for r in ok if r.reject)
    pvals = np.array([r.p_value for r in ok])
    if N:
        lo, hi = wilson_interval(Nr, N, 0.95)
        nu = np.mean([r.nu_hat for r in ok], axis=0)
        pmean = float(pvals.mean())
        pvar = float(pvals.var(ddof=1)) if N > 1 else 0.0
        rate = Nr / N
    else:
        lo = hi = rate = pmean = pvar = float("nan")
        nu = np.full(d, np.nan)
    return CellResult(n, tau, N, Nr, N - Nr, degenerate, rate, lo, hi, pmean, pvar, nu, pvals)


def run_sweep(cfg: SweepConfig) -> list[CellResult]:
    model = cfg.validate()
    d = effective_dim(model, cfg.setup)
    cells = list(itertools.product(cfg.n_grid, cfg.tau_grid))
    workers = min(cfg.parallelism, os.cpu_count() or 1)
    chunk = max(1, -(-cfg.replications // (4 * workers)))
    jobs, owners = [], []
    for ci, (n, tau) in enumerate(cells):
        for start in range(0, cfg.replications, chunk):
            reps = range(start, min(start + chunk, cfg.replications))
            jobs.append((cfg.model, cfg.setup, int(n), float(tau), cfg.alpha, cfg.seed, reps))
            owners.append(ci)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, jobs))
    else:
        chunks = [_run_chunk(j) for j in jobs]
    per_cell: list[list] = [[] for _ in cells]
    for ci, res in zip(owners, chunks):
        per_cell[ci].extend(res)
    return [_summarize(int(n), float(tau), reps, d) for (n, tau), reps in zip(cells, per_cell)]


def pvalue_ecdf(pvals: Sequence[float]) -> list[tuple[float, float]]:
    p = np.sort(np.asarray(pvals, dtype=float))
    if p.size == 0:
        raise ValueError("pvalue_ecdf needs at least one p-value")
    N = p.size
    return [(float(v), (i + 1) / N) for i, v in enumerate(p)]


def ks_uniform(pvals: Sequence[float]) -> float:
    """Kolmogorov-Smirnov distance between the sample and U(0, 1)."""
    p = np.sort(np.asarray(pvals, dtype=float))
    N = p.size
    i = np.arange(1, N + 1)
    return float(max(np.max(i / N - p), np.max(p - (i - 1) / N)))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def csv_header(d: int) -> list[str]:
    return list(CSV_FIELDS) + [f"nu_hat_{i}" for i in range(1, d + 1)]


def emit_csv(results: Sequence[CellResult], path, model: str = "", case: str = "", d: int | None = None) -> Path:
    """Write sweep results; floats use the shortest round-trip representation."""
    path = Path(path)
    if d is None:
        d = results[0].mean_nu_hat.size if results else 0
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(csv_header(d))
            for r in results:
                w.writerow(
                    [model, case, _fmt(r.n), _fmt(r.tau), _fmt(r.N), _fmt(r.rejections), _fmt(r.degenerate),
                     _fmt(r.rate), _fmt(r.wilson_lo), _fmt(r.wilson_hi), _fmt(r.pvalue_mean), _fmt(r.pvalue_var)]
                    + [_fmt(v) for v in r.mean_nu_hat]
                )
    except OSError as exc:
        raise OSError(f"cannot write sweep CSV to {path}: {exc}") from exc
    return path


def read_csv(path) -> tuple[str, str, list[CellResult]]:
    """Inverse of :func:`emit_csv` (p-value samples are not stored)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    model = case = ""
    for row in rows:
        model, case = row["model"], row["case"]
        nu = [float(v) for k, v in row.items() if k.startswith("nu_hat_")]
        N, Nr = int(row["N"]), int(row["rejections"])
        out.append(CellResult(
            n=int(row["n"]), tau=float(row["tau"]), N=N, rejections=Nr, failures=N - Nr,
            degenerate=int(row["degenerate"]), rate=float(row["rate"]),
            wilson_lo=float(row["wilson_lo"]), wilson_hi=float(row["wilson_hi"]),
            pvalue_mean=float(row["pvalue_mean"]), pvalue_var=float(row["pvalue_var"]),
            mean_nu_hat=np.array(nu),
        ))
    return model, case, out


def emit_ecdf(pvals: Sequence[float], path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["p_value", "ecdf"])
            for p, e in pvalue_ecdf(pvals):
                w.writerow([_fmt(p), _fmt(e)])
    except OSError as exc:
        raise OSError(f"cannot write ECDF to {path}: {exc}") from exc
    return path
