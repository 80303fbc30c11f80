"""Acceptance suite: one [PASS]/[FAIL] line per criterion, at the target tolerances.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
under output capture).
"""

import json
import time

import numpy as np
import pytest

from dyndet.cli import main
from dyndet.dynamics import TorusBranchSystem, coupled_model, linear_model, perturbed_model
from dyndet.homotopy import bump_battery, check_algebra, check_homotopy
from dyndet.kneading import KneadingQuadrature, mt_identity_check
from dyndet.orbits import build_orbit_table
from dyndet.series import (
    TruncatedSeries,
    alternating_product,
    regularized_identity_check,
    ruelle_flat_determinant_series,
    sharp_determinant_series,
    zeta_series,
)
from dyndet.spectra import duality_check, pressure_estimate


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        return ok

    return emit


def test_criterion_1_linear_closed_forms(report):
    t0 = time.perf_counter()
    table = build_orbit_table(TorusBranchSystem(linear_model()), 8)
    z = TruncatedSeries.variable(8)
    d = [ruelle_flat_determinant_series(table, k, 8) for k in range(3)]
    refs = [1 - z, (1 - z / 2) ** 2, 1 - z / 4]
    err = max(a.max_abs_diff(b) for a, b in zip(d, refs))
    zeta = zeta_series(table, 8)
    err = max(err, zeta.max_abs_diff((1 - z / 2) ** 2 / ((1 - z) * (1 - z / 4))))
    err = max(err, alternating_product(d).max_abs_diff(zeta))
    dt = time.perf_counter() - t0
    ok = err <= 1e-12 and dt < 10
    assert report(1, ok, f"max coefficient error {err:.2e} (tol 1e-12), {dt:.1f} s (limit 10 s)")


def test_criterion_2_census(report):
    table = build_orbit_table(TorusBranchSystem(linear_model()), 8)
    counts = [table.distinct_count(m) for m in range(1, 9)]
    ok = counts == [(2**m - 1) ** 2 for m in range(1, 9)]
    assert report(2, ok, f"|Fix f^m| for m = 1..8: {counts}")


def test_criterion_3_duality(report):
    t0 = time.perf_counter()
    system = TorusBranchSystem(perturbed_model(0.05))
    table = build_orbit_table(system, 10)
    worst, bijective, zero_at_one = 0.0, True, np.inf
    for k in range(3):
        res = duality_check(system, table, k, 10, 16)
        worst = max(worst, res.report.max_distance)
        bijective &= res.report.bijective
        if k == 0:
            zero_at_one = min((abs(z - 1) for z in res.zeros.expanded()), default=np.inf)
    dt = time.perf_counter() - t0
    ok = bijective and worst <= 1e-4 and zero_at_one <= 1e-8 and dt < 300
    assert report(
        3,
        ok,
        f"max zero/eigenvalue distance {worst:.2e} (tol 1e-4), bijective={bijective}, "
        f"|z0 - 1| = {zero_at_one:.2e} (tol 1e-8), {dt:.1f} s (limit 300 s)",
    )


def test_criterion_4_pressure(report):
    errs = [abs(pressure_estimate(TorusBranchSystem(m)) - 1.0) for m in (perturbed_model(), coupled_model())]
    ok = max(errs) <= 1e-8
    assert report(4, ok, f"|leading eigenvalue of M0+ - 1| = {max(errs):.2e} (tol 1e-8)")


def test_criterion_5_homotopy(report):
    finals, monotone, algebra = [], True, 0.0
    for k in range(3):
        forms = bump_battery(2, k, 5)
        curve = check_homotopy(k, forms, (32, 64, 128, 256))
        finals.append(curve.final)
        monotone &= curve.monotone(slack=0.0)
        algebra = max(algebra, check_algebra(k, forms, P=256).max())
    ok = max(finals) <= 1e-3 and monotone and algebra <= 1e-2
    assert report(
        5,
        ok,
        f"finest residuals {', '.join(f'{v:.2e}' for v in finals)} (tol 1e-3) over 4 levels, "
        f"monotone={monotone}, SS/projector residual {algebra:.2e} (tol 1e-2)",
    )


def test_criterion_6_kneading_order_one(report):
    t0 = time.perf_counter()
    default = KneadingQuadrature()
    levels = [KneadingQuadrature(16, default.radius, 12, 16), default, default.refined()]
    ok, parts = True, []
    for name, model, tol in (("linear", linear_model(), 1e-2), ("perturbed", perturbed_model(), 5e-2)):
        r = [mt_identity_check(model, 1, q)[0] for q in levels]
        decreasing = r[0] > r[1] > r[2]
        ok &= r[1] <= tol and decreasing
        parts.append(f"{name} {r[1]:.2e} (tol {tol:g}; levels {', '.join(f'{v:.1e}' for v in r)})")
    dt = time.perf_counter() - t0
    ok &= dt < 600
    assert report(6, ok, f"{'; '.join(parts)}, {dt:.1f} s (limit 600 s)")


def test_criterion_7_regularization(report):
    worst = 0.0
    for model in (linear_model(), perturbed_model()):
        table = build_orbit_table(TorusBranchSystem(model), 8)
        for k in range(3):
            for ell in range(1, 5):
                for M in range(ell, 9):
                    for kind in ("flat", "sharp"):
                        worst = max(worst, regularized_identity_check(table, k, ell, M, trace=kind))
    ok = worst <= 1e-12
    assert report(7, ok, f"max residual {worst:.2e} over l <= 4, M <= 8, both models (tol 1e-12)")


def _fd_jacobian(model, y, h=1e-3):
    cols = []
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        f = model.lift
        cols.append((-f(y + 2 * e) + 8 * f(y + e) - 8 * f(y - e) + f(y - 2 * e)) / (12 * h))
    return np.stack(cols, axis=-1)


def _read_dir(path):
    out = {}
    for p in sorted(path.iterdir()):
        data = p.read_bytes()
        if p.name == "summary.json":
            s = json.loads(data)
            for st in s["stages"].values():
                st.pop("seconds")
            data = json.dumps(s, sort_keys=True).encode()
        out[p.name] = data
    return out


def test_criterion_8_invariants(report, tmp_path):
    linear = build_orbit_table(TorusBranchSystem(linear_model()), 8)
    min_det = min(np.abs(linear[m].det_I_minus_J).min() for m in range(1, 9))
    sz = 0.0
    for model, M in ((linear_model(), 8), (perturbed_model(), 8), (coupled_model(), 6)):
        table = linear if model == linear_model() else build_orbit_table(TorusBranchSystem(model), M)
        prod = sharp_determinant_series(table, M) * zeta_series(table, M)
        sz = max(sz, prod.max_abs_diff(TruncatedSeries.constant(1.0, M)))
    pts = np.random.default_rng(8).random((200, 2))
    jac = 0.0
    for model in (perturbed_model(), coupled_model(0.08)):
        jac = max(jac, float(np.abs(model.jacobian(pts) - _fd_jacobian(model, pts)).max()))
    codes = [main(["det", "--model", "perturbed", "--out", str(tmp_path / r)]) for r in ("a", "b")]
    identical = _read_dir(tmp_path / "a") == _read_dir(tmp_path / "b")
    ok = min_det >= 0.25 * (1 - 1e-6) and sz <= 1e-10 and jac <= 1e-7 and identical and codes == [0, 0]
    assert report(
        8,
        ok,
        f"min |det(I-J)| {min_det:.6f} (>= {0.25 * (1 - 1e-6):.6f}), |Det# zeta - 1| {sz:.2e} (tol 1e-10), "
        f"Jacobian vs differences {jac:.2e} (tol 1e-7), byte-identical reruns={identical}",
    )
