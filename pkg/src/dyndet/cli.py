"""Experiment driver: config in, checks run stage by stage, JSON and CSV reports out.

Stages run in the order orbits, det, spectra, homotopy, kneading.  A stage that
fails is recorded and the stages that do not depend on it still run.

Exit codes: 0 when every check passes, 1 when a numerical check fails or a
stage errors, 2 for invalid input.  The default output directory is taken
from ``DYNDET_OUT`` (falling back to ``./dyndet-out``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dynamics import ModelError, TorusBranchSystem, TorusMapModel, coupled_model, linear_model, perturbed_model, theta_estimate
from .orbits import TransversalityError, build_orbit_table, flat_trace_coeff, sharp_trace, zeta_trace

STAGES = ("orbits", "det", "spectra", "homotopy", "kneading")
DEPENDS = {"det": ("orbits",), "spectra": ("orbits",)}
PRESETS = {"linear": linear_model, "perturbed": perturbed_model, "coupled": coupled_model}
OUT_ENV = "DYNDET_OUT"
SUMMARY_FILE = "summary.json"


class ConfigError(ValueError):
    pass


def _fmt(v) -> str:
    return format(float(v) + 0.0, ".17g")


# -- configuration ------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict = field(default_factory=lambda: linear_model().to_dict())
    M_max: int = 8
    N: int = 16
    max_period: int | None = None
    checks: tuple = STAGES
    homotopy_levels: tuple = (32, 64, 128, 256)
    algebra_resolution: int = 256
    kneading_resolution: int = 32
    kneading_radius: float = 0.1
    regularization_orders: int = 4
    duality_tol: float = 1e-4
    homotopy_tol: float = 1e-3
    algebra_tol: float = 1e-2
    kneading_tol: float = 5e-2
    threads: int = 1
    out: str | None = None

    def __post_init__(self):
        if isinstance(self.model, str):
            if self.model not in PRESETS:
                raise ConfigError(f"unknown model preset {self.model!r}")
            object.__setattr__(self, "model", PRESETS[self.model]().to_dict())
        object.__setattr__(self, "checks", tuple(self.checks))
        object.__setattr__(self, "homotopy_levels", tuple(int(v) for v in self.homotopy_levels))
        self.validate()

    def validate(self) -> None:
        ints = {
            "M_max": self.M_max,
            "N": self.N,
            "algebra_resolution": self.algebra_resolution,
            "kneading_resolution": self.kneading_resolution,
            "threads": self.threads,
        }
        for name, v in ints.items():
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.max_period is not None and (not isinstance(self.max_period, int) or self.max_period < 1):
            raise ConfigError("max_period must be a positive integer")
        if self.N < 4:
            raise ConfigError("N must be >= 4")
        if not isinstance(self.regularization_orders, int) or self.regularization_orders < 0:
            raise ConfigError("regularization_orders must be a non-negative integer")
        for name in ("kneading_radius", "duality_tol", "homotopy_tol", "algebra_tol", "kneading_tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if len(self.homotopy_levels) < 1 or min(self.homotopy_levels) < 8:
            raise ConfigError("homotopy_levels need at least one level of >= 8 cells")
        bad = [c for c in self.checks if c not in STAGES]
        if bad or not self.checks:
            raise ConfigError(f"checks must be a non-empty subset of {STAGES}, got {list(self.checks)}")
        try:
            self.torus_model()
        except (ModelError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model: {exc}") from exc

    @property
    def periods(self) -> int:
        return self.max_period or self.M_max

    def torus_model(self) -> TorusMapModel:
        return TorusMapModel.from_dict(self.model)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"] = list(self.checks)
        d["homotopy_levels"] = list(self.homotopy_levels)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def hash(self) -> str:
        """Hash of the numerical content (output location and threads excluded)."""
        d = self.to_dict()
        d.pop("out", None)
        d.pop("threads", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# -- report -------------------------------------------------------------------------


@dataclass
class StageResult:
    status: str = "pass"  # pass | fail | error | skipped
    checks: dict = field(default_factory=dict)
    seconds: float = 0.0
    error: str | None = None

    def check(self, name: str, value: float, tol: float, passed: bool | None = None) -> bool:
        ok = bool(value <= tol) if passed is None else bool(passed)
        self.checks[name] = {"value": float(value), "tol": float(tol), "pass": ok}
        if not ok and self.status == "pass":
            self.status = "fail"
        return ok


@dataclass
class Report:
    config_hash: str
    stages: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # file name -> CSV text

    @property
    def passed(self) -> bool:
        return all(s.status == "pass" for s in self.stages.values())

    def summary(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "passed": self.passed,
            "stages": {name: asdict(s) for name, s in self.stages.items()},
            "tables": sorted(self.tables),
        }


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# -- stages -------------------------------------------------------------------------


def _stage_orbits(cfg, ctx, res: StageResult, report: Report):
    system = ctx["system"]
    table = build_orbit_table(system, cfg.periods)
    ctx["table"] = table
    n = system.n
    A = np.array(system.model.A, dtype=float)
    rows = []
    census_ok = True
    min_det = math.inf
    for m in range(1, table.max_period + 1):
        expected = int(round(abs(np.linalg.det(np.linalg.matrix_power(A, m) - np.eye(n)))))
        count = table.distinct_count(m)
        census_ok &= count == expected
        min_det = min(min_det, float(np.abs(table[m].det_I_minus_J).min()))
        row = [m, count, expected]
        for v in [sharp_trace(table, m), zeta_trace(table, m)] + [flat_trace_coeff(table, k, m) for k in range(n + 1)]:
            row += [_fmt(v.real), _fmt(v.imag)]
        rows.append(row)
    header = ["period", "count", "expected", "sharp_re", "sharp_im", "zeta_re", "zeta_im"]
    for k in range(n + 1):
        header += [f"flat{k}_re", f"flat{k}_im"]
    report.tables["traces.csv"] = _csv(header, rows)
    short = build_orbit_table(system, min(4, cfg.periods)) if cfg.periods > 4 else table
    report.tables["orbits.csv"] = short.to_csv()
    res.check("census", 0.0 if census_ok else 1.0, 0.0, census_ok)
    res.checks["min_det_I_minus_J"] = {"value": min_det, "tol": 0.0, "pass": True}


def _stage_det(cfg, ctx, res: StageResult, report: Report):
    from .series import (
        alternating_product,
        find_zeros,
        regularized_identity_check,
        ruelle_flat_determinant_series,
        sharp_determinant_series,
        zeta_series,
    )

    table, n, M = ctx["table"], ctx["system"].n, min(cfg.M_max, cfg.periods)
    dets = [ruelle_flat_determinant_series(table, k, M) for k in range(n + 1)]
    zeta = zeta_series(table, M)
    sharp = sharp_determinant_series(table, M)
    rows = []
    for name, s in [(f"d{k}", d) for k, d in enumerate(dets)] + [("zeta", zeta), ("sharp", sharp)]:
        rows += [[name, m, _fmt(c.real), _fmt(c.imag)] for m, c in enumerate(s.coeffs)]
    report.tables["series.csv"] = _csv(["series", "order", "re", "im"], rows)
    res.check("alternating_product", alternating_product(dets).max_abs_diff(zeta), 1e-10)
    res.check("sharp_times_zeta", (sharp * zeta).max_abs_diff(type(zeta).constant(1.0, M)), 1e-10)
    worst = 0.0
    for k in range(n + 1):
        for ell in range(1, min(cfg.regularization_orders, M) + 1):
            for kind in ("flat", "sharp"):
                worst = max(worst, regularized_identity_check(table, k, ell, M, trace=kind))
    res.check("regularization", worst, 1e-12)
    zrows = []
    for k, d in enumerate(dets):
        for z in find_zeros(d, 8.0):
            zrows.append([k, _fmt(z.z.real), _fmt(z.z.imag), z.multiplicity, int(z.stable)])
    report.tables["zeros.csv"] = _csv(["k", "re", "im", "mult", "stable"], zrows)


def _stage_spectra(cfg, ctx, res: StageResult, report: Report):
    from .spectra import duality_check, eigenvalue_csv, match_json, pressure_estimate

    system, table, n = ctx["system"], ctx["table"], ctx["system"].n
    eP = pressure_estimate(system)
    theta = theta_estimate(system)
    res.checks["exp_pressure"] = {"value": eP, "tol": 0.0, "pass": True}
    res.checks["theta"] = {"value": theta, "tol": 0.0, "pass": True}
    if system.model.weight == "acip":
        res.check("pressure_normalization", abs(eP - 1.0), 1e-8)
    M = min(cfg.M_max, cfg.periods)
    erows, reports = [], {}
    for k in range(n + 1):
        out = duality_check(system, table, k, M, cfg.N, theta=theta, exp_pressure=eP)
        reports[k] = out.report
        for lam in out.eigenvalues:
            erows.append((k, lam, abs(lam) > out.eigen_bound))
        res.check(f"duality_k{k}", out.report.max_distance, cfg.duality_tol, out.report.passed(cfg.duality_tol))
    report.tables["eigenvalues.csv"] = eigenvalue_csv(erows)
    report.tables["matches.json"] = match_json(reports)


def _stage_homotopy(cfg, ctx, res: StageResult, report: Report):
    from .homotopy import bump_battery, check_algebra, check_homotopy

    n = ctx["system"].n
    for k in range(n + 1):
        forms = bump_battery(n, k)
        curve = check_homotopy(k, forms, cfg.homotopy_levels)
        report.tables[f"homotopy_k{k}.csv"] = curve.to_csv()
        res.check(f"homotopy_k{k}", curve.final, cfg.homotopy_tol)
        if len(cfg.homotopy_levels) >= 3:
            res.check(f"homotopy_k{k}_monotone", 0.0, 0.0, curve.monotone(slack=0.0))
        alg = check_algebra(k, forms, P=cfg.algebra_resolution)
        for name, v in sorted(alg.residuals.items()):
            res.check(f"algebra_k{k}_{name}", v, cfg.algebra_tol)


def _stage_kneading(cfg, ctx, res: StageResult, report: Report):
    from .kneading import (
        KneadingCoefficient,
        KneadingKernelCoeff,
        KneadingQuadrature,
        as_branch_system,
        kneading_csv,
        kneading_trace_coeff,
        singular_point_map,
    )

    model, n = ctx["system"].model, ctx["system"].n
    branch = as_branch_system(model)
    quad = KneadingQuadrature(cfg.kneading_resolution, cfg.kneading_radius)
    points = singular_point_map(branch, KneadingKernelCoeff(branch, 0, 0).words())
    table = ctx.get("table") or build_orbit_table(ctx["system"], 1)
    lhs = -sharp_trace(table, 1)
    rows, residuals = [], []
    for q in (_coarser(quad), quad, quad.refined()):
        cs = [kneading_trace_coeff(branch, k, 0, q, threads=cfg.threads, singular=points) for k in range(n)]
        residuals.append((q, cs, abs(lhs - sum((-1) ** (k + 1) * c for k, c in enumerate(cs)))))
    _, cs0, _ = residuals[1]
    _, cs1, _ = residuals[2]
    for k in range(n):
        rows.append(KneadingCoefficient(k, 0, cs0[k], abs(cs1[k] - cs0[k])))
    report.tables["kneading.csv"] = kneading_csv(rows)
    report.tables["kneading_residuals.csv"] = _csv(
        ["level", "resolution", "residual"], [[i, q.resolution, _fmt(r)] for i, (q, _, r) in enumerate(residuals)]
    )
    res.check("mt_order1", residuals[1][2], cfg.kneading_tol)
    dec = residuals[0][2] > residuals[1][2] > residuals[2][2]
    res.check("mt_order1_decreasing", 0.0, 0.0, dec)


def _coarser(quad):
    return replace(quad, resolution=max(4, quad.resolution // 2), n_radial=max(2, quad.n_radial // 2), n_angular=max(4, quad.n_angular // 2))


RUNNERS = {
    "orbits": _stage_orbits,
    "det": _stage_det,
    "spectra": _stage_spectra,
    "homotopy": _stage_homotopy,
    "kneading": _stage_kneading,
}


def run(config: ExperimentConfig) -> Report:
    """Run the requested stages; dependencies of requested stages run as well."""
    model = config.torus_model()
    system = TorusBranchSystem(model)
    system.validate()
    wanted = [s for s in STAGES if s in config.checks or any(s in DEPENDS.get(c, ()) for c in config.checks)]
    report = Report(config.hash())
    ctx = {"system": system}
    for name in wanted:
        res = StageResult()
        missing = [d for d in DEPENDS.get(name, ()) if report.stages.get(d) is None or report.stages[d].status == "error"]
        if missing:
            res.status = "skipped"
            res.error = f"needs {', '.join(missing)}"
            report.stages[name] = res
            continue
        t0 = time.perf_counter()
        try:
            RUNNERS[name](config, ctx, res, report)
        except TransversalityError:
            raise
        except Exception as exc:  # recorded; independent stages continue
            res.status = "error"
            res.error = f"{type(exc).__name__}: {exc}"
        res.seconds = time.perf_counter() - t0
        report.stages[name] = res
    return report


def emit(report: Report, out_dir, fmt: str = "all") -> list[Path]:
    """Write summary.json and/or one file per table; returns the paths written."""
    if fmt not in ("json", "csv", "all"):
        raise ValueError("format must be json, csv or all")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "all"):
        p = out / SUMMARY_FILE
        p.write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
        written.append(p)
    if fmt in ("csv", "all"):
        for name in sorted(report.tables):
            p = out / name
            p.write_text(report.tables[name])
            written.append(p)
    return written


def _print_summary(report: Report, stream) -> None:
    stream.write(f"{'stage':<10} {'check':<28} {'value':>12} {'tol':>10}  status\n")
    for name, st in report.stages.items():
        if not st.checks:
            stream.write(f"{name:<10} {'-':<28} {'':>12} {'':>10}  {st.status}{' (' + st.error + ')' if st.error else ''}\n")
        for cname, c in st.checks.items():
            stream.write(f"{name:<10} {cname:<28} {c['value']:>12.3e} {c['tol']:>10.1e}  {'pass' if c['pass'] else 'FAIL'}\n")
        if st.error and st.checks:
            stream.write(f"{name:<10} error: {st.error}\n")
    stream.write(f"overall: {'pass' if report.passed else 'FAIL'}  (config {report.config_hash[:12]})\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyndet", description="Dynamical determinants, zeta functions and transfer spectra.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("all",):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "all" else "run every stage")
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./dyndet-out)")
        p.add_argument("--max-period", type=int, help="longest period to enumerate")
        p.add_argument("--modes", type=int, help="Fourier cutoff N of the collocated operators")
        p.add_argument("--threads", type=int, help="worker threads for the kneading quadrature")
        p.add_argument("--model", choices=sorted(PRESETS), help="built-in model (when no config model is given)")
        p.add_argument("--format", choices=("json", "csv", "all"), default="all")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        d = json.loads(args.config.read_text()) if args.config else {}
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        if args.model:
            d["model"] = args.model
        if args.max_period is not None:
            d["max_period"] = args.max_period
        if args.modes is not None:
            d["N"] = args.modes
        if args.threads is not None:
            d["threads"] = args.threads
        d["checks"] = list(STAGES) if args.command == "all" else [args.command]
        out = args.out or d.get("out") or os.environ.get(OUT_ENV) or "dyndet-out"
        d["out"] = str(out)
        cfg = ExperimentConfig.from_dict(d)
        report = run(cfg)
    except (ConfigError, ModelError, TransversalityError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"dyndet: invalid input: {exc}\n")
        return 2
    try:
        emit(report, cfg.out, args.format)
    except OSError as exc:
        sys.stderr.write(f"dyndet: cannot write reports: {exc}\n")
        return 2
    _print_summary(report, sys.stdout)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
