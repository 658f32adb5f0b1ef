"""Command-line interface.

Exit codes: 0 = no lurking variable detected, 2 = lurking variable detected
(analytically or by the test), 1 = usage/config/data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .detect import DetectionConfig, TestReport, detect, predict_power
from .dimensions import (
    MLT,
    DimMatrix,
    DimVector,
    DimensionError,
    FullRankPinned,
    check_homogeneity,
    format_exponent,
    nondim_vector,
    nullspace_basis,
    pinned_complement,
)
from .harness import (
    SweepConfig,
    emit_csv,
    emit_ecdf,
    replication_stream,
    run_sweep,
    simulate_data,
)
from .models import MODELS, ExperimentSetup, ModelSpec, get_model
from .statkit import GaussianDesign, SingularCovariance, TooFewSamples

EXIT_OK, EXIT_ERROR, EXIT_DETECTED = 0, 1, 2
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _names(value, key) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str):
        value = [v.strip() for v in value.split(",") if v.strip()]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{key!r} must be a list of variable names")
    return list(value)


@dataclass
class RunConfig:
    basis: tuple[str, ...]
    D: DimMatrix
    qoi_name: str
    dq: DimVector
    exposed: list[str]
    lurking: list[str] = field(default_factory=list)
    pinned: list[str] = field(default_factory=list)
    model: ModelSpec | None = None
    log_base: float = math.e
    design: GaussianDesign | None = None
    alpha: float = 0.05
    tau: float = 0.0
    n: int | None = None
    n_grid: list[int] = field(default_factory=list)
    tau_grid: list[float] = field(default_factory=list)
    replications: int = 200
    seed: int = 0
    case: str = "custom"
    data_path: str | None = None
    qoi_column: str | None = None
    outputs: dict = field(default_factory=dict)
    power: dict = field(default_factory=dict)

    @property
    def D_ex(self) -> DimMatrix:
        return self.D.select(self.exposed)

    @property
    def D_pin(self) -> DimMatrix | None:
        return self.D.select(self.pinned) if self.pinned else None

    def setup(self) -> ExperimentSetup:
        if self.model is None:
            raise ConfigError("this command needs a registered 'model'")
        m = self.model
        default = m.default_design.subset(m.index(self.exposed))
        override = None
        if self.design is not None and not (
            np.array_equal(self.design.mu, default.mu) and np.array_equal(self.design.sigma, default.sigma)
        ):
            override = self.design
        s = ExperimentSetup(m.index(self.exposed), m.index(self.lurking), m.index(self.pinned), self.tau, override)
        s.validate(m)
        return s

    def detection_config(self) -> DetectionConfig:
        if self.design is None:
            raise ConfigError("detection needs the sampling design (design.mu and design.sigma for each exposed variable)")
        return DetectionConfig(self.D_ex, self.dq, self.design, alpha=self.alpha, D_pin=self.D_pin, log_base=self.log_base)


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document before any computation happens."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    schema = doc.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {schema!r}; expected {SCHEMA_VERSION}")

    model = None
    if doc.get("model") is not None:
        try:
            model = get_model(doc["model"])
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None

    try:
        if "variables" in doc:
            basis = tuple(doc.get("basis", model.D.basis if model else MLT))
            variables = doc["variables"]
            if not isinstance(variables, dict):
                raise ConfigError("'variables' must map names to exponent lists")
            D = DimMatrix.from_dict(variables, basis)
        elif model is not None:
            basis, D = model.D.basis, model.D
        else:
            raise ConfigError("config needs either 'variables' or a registered 'model'")
        if model is not None and D.variable_names != model.variable_names:
            raise ConfigError(f"variables must match model {model.name!r}: {list(model.variable_names)}")

        qoi = doc.get("qoi")
        if qoi is None:
            if model is None:
                raise ConfigError("config needs 'qoi' with 'name' and 'dims'")
            qoi_name, dq = model.qoi_name, model.dq
        else:
            qoi_name = qoi.get("name", model.qoi_name if model else "qoi")
            dq = DimVector(tuple(qoi["dims"]), basis) if "dims" in qoi else (model.dq if model else None)
            if dq is None:
                raise ConfigError("'qoi.dims' is required")
    except DimensionError as exc:
        raise ConfigError(str(exc)) from None

    declared = list(D.variable_names)
    lurking = _names(doc.get("lurking"), "lurking")
    pinned = _names(doc.get("pinned"), "pinned")
    if "exposed" in doc:
        exposed = _names(doc["exposed"], "exposed")
        assigned = exposed + lurking + pinned
        dupes = sorted({v for v in assigned if assigned.count(v) > 1})
        unknown = sorted(set(assigned) - set(declared))
        unassigned = [v for v in declared if v not in assigned]
        if dupes or unknown or unassigned:
            raise ConfigError(
                f"exposed/lurking/pinned must partition the variables exactly "
                f"(duplicates={dupes}, unknown={unknown}, unassigned={unassigned})"
            )
    else:
        for v in lurking + pinned:
            if v not in declared:
                raise ConfigError(f"unknown variable {v!r}")
        if len(set(lurking + pinned)) != len(lurking + pinned):
            raise ConfigError("a variable cannot be both lurking and pinned")
        exposed = [v for v in declared if v not in lurking and v not in pinned]

    dsg = doc.get("design", {}) or {}
    log_base = dsg.get("log_base", model.log_base if model else math.e)
    if log_base in ("e", "E"):
        log_base = math.e
    log_base = float(log_base)
    design = None
    if "mu" in dsg or "sigma" in dsg:
        mu_map, sd_map = dsg.get("mu", {}), dsg.get("sigma", {})
        missing = [v for v in exposed if v not in mu_map or v not in sd_map]
        if missing:
            raise ConfigError(f"design.mu/design.sigma missing exposed variables {missing}")
        try:
            design = GaussianDesign([mu_map[v] for v in exposed], [sd_map[v] for v in exposed])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    elif model is not None:
        design = model.default_design.subset(model.index(exposed))

    sweep = doc.get("sweep", {}) or {}
    data = doc.get("data", {}) or {}
    cfg = RunConfig(
        basis=tuple(basis),
        D=D,
        qoi_name=qoi_name,
        dq=dq,
        exposed=exposed,
        lurking=lurking,
        pinned=pinned,
        model=model,
        log_base=log_base,
        design=design,
        alpha=float(doc.get("alpha", 0.05)),
        tau=float(doc.get("tau", 0.0)),
        n=doc.get("n"),
        n_grid=[int(v) for v in sweep.get("n_grid", [])],
        tau_grid=[float(v) for v in sweep.get("tau_grid", [doc.get("tau", 0.0)])],
        replications=int(sweep.get("replications", 200)),
        seed=int(doc.get("seed", 0)),
        case=str(doc.get("case", "custom")),
        data_path=data.get("path"),
        qoi_column=data.get("qoi_column"),
        outputs=dict(doc.get("output", {}) or {}),
        power=dict(doc.get("power", {}) or {}),
    )
    if not 0 < cfg.alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if cfg.tau < 0:
        raise ConfigError("tau must be non-negative")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if cfg.log_base <= 0 or cfg.log_base == 1:
        raise ConfigError("design.log_base must be positive and not 1")
    return cfg


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(doc)


def read_data(path, columns: Sequence[str], qoi_column: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a CSV of physical-unit columns; returns (inputs in column order, qoi)."""
    try:
        text = sys.stdin.read() if str(path) == "-" else Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read data {path}: {exc}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ConfigError(f"data file {path} is empty")
    header = [h.strip() for h in rows[0]]
    need = list(columns) + [qoi_column]
    missing = [c for c in need if c not in header]
    if missing:
        raise ConfigError(f"data file {path} lacks columns {missing}")
    idx = [header.index(c) for c in need]
    try:
        values = np.array([[float(r[i]) for i in idx] for r in rows[1:] if r], dtype=float).reshape(-1, len(need))
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"data file {path} has missing or non-numeric values: {exc}") from None
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"data file {path} has non-finite values")
    return values[:, :-1], values[:, -1]


def _out(path: str | None):
    if path is None or path == "-":
        return None
    return Path(path)


def _print(msg: str = "", stream=None):
    print(msg, file=stream or sys.stdout)


def format_report(report: TestReport, seed: int | None = None, extra: dict | None = None) -> str:
    items = dict(extra or {})
    if seed is not None:
        items["seed"] = seed
    items.update(report.as_dict())
    lines = []
    for k, v in items.items():
        if isinstance(v, bool):
            v = str(v).lower()
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def cmd_models(cfg: RunConfig | None, args) -> int:
    for m in MODELS.values():
        _print(f"{m.name}: {m.description}")
        _print(f"  qoi {m.qoi_name} dims {m.dq.serialize()}  log base {'e' if m.log_base == math.e else m.log_base}")
        for name, col, mu, sd in zip(m.variable_names, m.D.columns, m.default_design.mu, m.default_design.sigma):
            _print(f"  {name:8s} dims {str(col.serialize()):14s} mu {mu:+.4f} sigma {sd:.4f}")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, args) -> int:
    verdict = check_homogeneity(cfg.D_ex, cfg.dq)
    _print(f"exposed: {cfg.exposed}")
    _print(f"qoi {cfg.qoi_name} dims: {cfg.dq.serialize()} over {list(cfg.basis)}")
    if not verdict.homogeneous:
        _print(f"LURKING VARIABLE DETECTED (analytic): missing dimensions [{', '.join(verdict.missing_dimensions)}]")
        return EXIT_DETECTED
    _print("homogeneous: a non-dimensionalizing factor exists; use 'detect' to test experimentally")
    if cfg.pinned:
        try:
            W = pinned_complement(cfg.D_pin)
            _print(f"pinned {cfg.pinned}: test dimension reduced to {W.shape[1]}")
        except FullRankPinned as exc:
            _print(f"warning: {exc}; experimental detection is impossible")
    return EXIT_OK


def cmd_nondim(cfg: RunConfig, args) -> int:
    D_ex = cfg.D_ex
    verdict = check_homogeneity(D_ex, cfg.dq)
    if not verdict.homogeneous:
        _print(f"LURKING VARIABLE DETECTED (analytic): {verdict.describe()}")
        return EXIT_DETECTED
    w = nondim_vector(D_ex, cfg.dq)
    _print("non-dimensionalizing exponents (orthogonal to the pi subspace):")
    for name, e in zip(cfg.exposed, w):
        _print(f"  {name} {format_exponent(e)}")
    basis = nullspace_basis(D_ex)
    _print(f"pi-group basis ({len(basis)} groups):")
    for v in basis:
        _print("  " + " ".join(f"{n}^{format_exponent(e)}" for n, e in zip(cfg.exposed, v) if e != 0))
    return EXIT_OK


def cmd_detect(cfg: RunConfig, args) -> int:
    verdict = check_homogeneity(cfg.D_ex, cfg.dq)
    if not verdict.homogeneous:
        _print(f"LURKING VARIABLE DETECTED (analytic): {verdict.describe()}; experimental test skipped")
        return EXIT_DETECTED
    data_path = getattr(args, "data", None) or cfg.data_path
    if data_path is None:
        raise ConfigError("detect needs a data file (--data or data.path in the config)")
    qcol = cfg.qoi_column or cfg.qoi_name
    Z, q = read_data(data_path, cfg.exposed, qcol)
    if np.any(Z <= 0):
        raise ConfigError("exposed variables must be positive to take logarithms")
    X = np.log(Z) / math.log(cfg.log_base)
    dcfg = cfg.detection_config()
    try:
        report = detect(X, q, dcfg)
    except (TooFewSamples, SingularCovariance) as exc:
        raise ConfigError(str(exc)) from None
    except FullRankPinned as exc:
        raise ConfigError(str(exc)) from None
    seed = _seed(cfg, args)
    text = format_report(report, seed, {"qoi": cfg.qoi_name, "exposed": ",".join(cfg.exposed),
                                        "pinned": ",".join(cfg.pinned)})
    out = _out(getattr(args, "out", None) or cfg.outputs.get("report"))
    if out is not None:
        out.write_text(text)
    verdict_line = "LURKING VARIABLE DETECTED" if report.reject else "no lurking variable detected"
    _print(f"{verdict_line}: t2={report.t2:.6g} critical={report.critical:.6g} "
           f"p={report.p_value:.6g} (alpha={report.alpha}, n={report.n}, d={report.dof_num})")
    _print("estimated dimension vector: " + " ".join(f"{b}={v:+.4g}" for b, v in zip(
        cfg.basis if not cfg.pinned else [f"w{i + 1}" for i in range(report.dof_num)], report.nu_hat)))
    if out is None:
        _print(text.rstrip())
    return EXIT_DETECTED if report.reject else EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    model_setup = cfg.setup()
    n = getattr(args, "n", None)
    if n is None:
        n = cfg.n
    if n is None:
        raise ConfigError("simulate needs a sample count (--n or 'n' in the config)")
    n = int(n)
    if n < 0:
        raise ConfigError("n must be non-negative")
    seed = _seed(cfg, args)
    X, q = simulate_data(cfg.model, model_setup, n, replication_stream(seed, n, cfg.tau, 0))
    Z = np.power(cfg.model.log_base, X)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(cfg.exposed) + [cfg.qoi_name])
    for zrow, qv in zip(Z, q):
        w.writerow([repr(float(v)) for v in zrow] + [repr(float(qv))])
    out = _out(getattr(args, "out", None) or cfg.outputs.get("data"))
    if out is None:
        sys.stdout.write(buf.getvalue())
    else:
        out.write_text(buf.getvalue())
    _print(f"wrote {n} rows to {out or 'stdout'} (model={cfg.model.name}, seed={seed}, tau={cfg.tau})", sys.stderr)
    return EXIT_OK


def _seed(cfg: RunConfig, args) -> int:
    seed = getattr(args, "seed", None)
    return cfg.seed if seed is None else seed


def cmd_sweep(cfg: RunConfig, args) -> int:
    setup = cfg.setup()
    if not cfg.n_grid:
        raise ConfigError("sweep needs sweep.n_grid")
    seed = _seed(cfg, args)
    reps = getattr(args, "replications", None)
    reps = cfg.replications if reps is None else reps
    scfg = SweepConfig(
        model=cfg.model.name, setup=setup, n_grid=cfg.n_grid, tau_grid=cfg.tau_grid or [cfg.tau],
        replications=reps, alpha=cfg.alpha, seed=seed, parallelism=getattr(args, "threads", None) or 1,
        case=cfg.case,
    )
    try:
        results = run_sweep(scfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _out(getattr(args, "out", None) or cfg.outputs.get("sweep"))
    if out is None:
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            p = emit_csv(results, Path(tmp) / "sweep.csv", cfg.model.name, cfg.case)
            sys.stdout.write(p.read_text())
    else:
        emit_csv(results, out, cfg.model.name, cfg.case)
    ecdf = cfg.outputs.get("ecdf")
    if ecdf and results and results[-1].pvalues.size:
        emit_ecdf(results[-1].pvalues, ecdf)
    stream = sys.stderr if out is None else sys.stdout
    _print(f"sweep model={cfg.model.name} case={cfg.case} seed={seed} N={reps}", stream)
    for r in results:
        _print(f"  n={r.n:6d} tau={r.tau:<10g} rate={r.rate:.3f} [{r.wilson_lo:.3f}, {r.wilson_hi:.3f}] "
               f"p-mean={r.pvalue_mean:.3f} p-var={r.pvalue_var:.4f} degenerate={r.degenerate}", stream)
    return EXIT_OK


def cmd_power(cfg: RunConfig | None, args) -> int:
    opts = dict(cfg.power) if cfg else {}
    k = args.k if args.k is not None else opts.get("k")
    n_grid = args.n_grid or opts.get("n_grid")
    d = args.d if args.d is not None else opts.get("d", len(cfg.basis) if cfg else 3)
    alpha = args.alpha if args.alpha is not None else opts.get("alpha", cfg.alpha if cfg else 0.05)
    if k is None or not n_grid:
        raise ConfigError("power needs --k and --n-grid (or a 'power' section in the config)")
    if isinstance(n_grid, str):
        n_grid = [int(v) for v in n_grid.split(",")]
    try:
        rows = [(int(n), predict_power(float(k), int(n), int(d), float(alpha))) for n in n_grid]
    except (ValueError, TooFewSamples) as exc:
        raise ConfigError(str(exc)) from None
    _print(f"predicted power: k={k} d={d} alpha={alpha}")
    _print(f"{'n':>8s}  power")
    for n, p in rows:
        _print(f"{n:8d}  {p:.6f}")
    return EXIT_OK


COMMANDS = {
    "analyze": (cmd_analyze, True, "analytic homogeneity check of the exposed variables"),
    "nondim": (cmd_nondim, True, "print the canonical non-dimensionalizing vector and pi groups"),
    "detect": (cmd_detect, True, "run the Stein/Hotelling test on measured data"),
    "simulate": (cmd_simulate, True, "generate virtual-experiment data from a built-in model"),
    "sweep": (cmd_sweep, True, "Monte Carlo Type I error / power sweep"),
    "power": (cmd_power, False, "predicted power from k over a grid of sample counts"),
    "models": (cmd_models, False, "list the built-in models"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (overrides config)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes for sweeps")

    parser = argparse.ArgumentParser(prog="lurkdim", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, _, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_, parents=[common])
        if name == "detect":
            p.add_argument("--data", help="CSV with exposed columns (physical units) and the qoi column")
        if name == "simulate":
            p.add_argument("--n", type=int, help="number of rows")
        if name == "sweep":
            p.add_argument("--replications", type=int, help="replications per cell")
        if name == "power":
            p.add_argument("--k", type=float)
            p.add_argument("--n-grid", dest="n_grid", type=lambda s: [int(v) for v in s.split(",")])
            p.add_argument("--d", type=int)
            p.add_argument("--alpha", type=float)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    func, needs_config, _ = COMMANDS[args.command]
    try:
        cfg = None
        path = getattr(args, "config", None)
        if path is not None:
            cfg = load_config(path)
        elif needs_config:
            raise ConfigError(f"'{args.command}' needs --config")
        if getattr(args, "seed", None) is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        return func(cfg, args)
    except (ConfigError, DimensionError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
