import itertools

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyndet.dynamics import (
    EuclideanBranchSystem,
    TorusBranchSystem,
    TorusMapModel,
    affine_branch,
    coupled_model,
    linear_model,
)
from dyndet.orbits import (
    TransversalityError,
    admissible_words,
    build_orbit_table,
    find_fixed_point,
    flat_trace_coeff,
    lefschetz_sign,
    sharp_trace,
    torus_word_fixed_points,
    zeta_trace,
)


@pytest.mark.parametrize("m", range(1, 7))
def test_census_linear(linear_table, m):
    assert linear_table.count(m) == (2**m - 1) ** 2
    assert linear_table.distinct_count(m) == (2**m - 1) ** 2


def test_census_other_matrix():
    system = TorusBranchSystem(TorusMapModel(((2, 1), (1, 3))))
    table = build_orbit_table(system, 3)
    A = np.array([[2, 1], [1, 3]])
    for m in (1, 2, 3):
        expected = round(abs(np.linalg.det(np.linalg.matrix_power(A, m) - np.eye(2))))
        assert table.distinct_count(m) == expected


def test_points_are_periodic(coupled_table, coupled_system):
    model = coupled_system.model
    for m in range(1, 5):
        d = coupled_table[m]
        y = d.x.copy()
        for _ in range(m):
            y = model.lift(y)
        k = y - d.x
        assert np.abs(k - np.round(k)).max() < 1e-11


def _mp_sharp_trace(model, x0s, m):
    """Sharp trace from fixed points refined in 30-digit arithmetic."""
    mp.mp.dps = 30
    eps = mp.mpf(model.epsilon)
    terms = [(t.component, t.freq, mp.mpf(t.coeff_sin), mp.mpf(t.coeff_cos)) for t in model.perturbation]
    A = [[mp.mpf(v) for v in row] for row in model.A]

    def F(y):
        out = [sum(A[i][j] * y[j] for j in range(2)) for i in range(2)]
        for c, f, s, co in terms:
            arg = 2 * mp.pi * (f[0] * y[0] + f[1] * y[1])
            out[c] += eps * (s * mp.sin(arg) + co * mp.cos(arg))
        return out

    def DF(y):
        J = mp.matrix(A)
        for c, f, s, co in terms:
            arg = 2 * mp.pi * (f[0] * y[0] + f[1] * y[1])
            dv = 2 * mp.pi * (s * mp.cos(arg) - co * mp.sin(arg))
            for j in range(2):
                J[c, j] += eps * dv * f[j]
        return J

    total = mp.mpf(0)
    for x0 in x0s:
        y = [mp.mpf(float(v)) for v in x0]
        z = y
        for _ in range(m):
            z = F(z)
        k = [mp.nint(z[i] - y[i]) for i in range(2)]

        def residual(a, b):
            w = [a, b]
            for _ in range(m):
                w = F(w)
            return [w[0] - a - k[0], w[1] - b - k[1]]

        root = mp.findroot(residual, y)
        w = [root[0], root[1]]
        Dm = mp.eye(2)
        g = mp.mpf(1)
        for _ in range(m):
            J = DF(w)
            g /= abs(mp.det(J))
            Dm = J * Dm
            w = F(w)
        Jinv = Dm**-1
        L = mp.sign(mp.det(mp.eye(2) - Jinv))
        total += g * L
    return total


@pytest.mark.parametrize("m", [1, 2, 3])
def test_sharp_trace_high_precision_oracle(coupled_table, coupled_system, m):
    ref = _mp_sharp_trace(coupled_system.model, coupled_table[m].x, m)
    assert abs(sharp_trace(coupled_table, m) - complex(ref)) < 1e-12


def test_word_fixed_points_land_on_records(perturbed_system, perturbed_table):
    model = perturbed_system.model
    for m in (1, 2, 3):
        d = perturbed_table[m]
        for word in [(0,) * m, (1, 2, 3)[:m], (3,) * m, (2, 0, 1)[:m]]:
            p = find_fixed_point(perturbed_system, word)
            y = p.x
            for _ in range(m):
                y = model.lift(y)
            k = y - p.x
            assert np.abs(k - np.round(k)).max() < 1e-10
            diff = np.abs((d.x - np.mod(p.x, 1.0) + 0.5) % 1.0 - 0.5).max(axis=1)
            i = int(diff.argmin())
            assert diff[i] < 1e-10
            assert p.weight == pytest.approx(complex(d.weight[i]), abs=1e-14)
            assert p.weight == pytest.approx(abs(np.linalg.det(p.J)), abs=1e-14)


def test_linear_period_two_words(linear_system):
    pts = set()
    for w in itertools.product(range(4), repeat=2):
        p = find_fixed_point(linear_system, w)
        pts.add(tuple(np.round(np.mod(p.x * 3, 3.0)).astype(int) % 3))
        assert np.allclose(p.J, 0.25 * np.eye(2))
    assert len(pts) == 9
    p = find_fixed_point(linear_system, (0,))
    assert np.allclose(p.x, 0) and np.allclose(p.J, 0.5 * np.eye(2)) and p.lefschetz == 1
    assert p.weight == pytest.approx(0.25)


def test_word_conservation(perturbed_system):
    """The per-word view has |det A|^m records (one per word)."""
    for m in (1, 2, 3):
        d = torus_word_fixed_points(perturbed_system, m)
        assert len(d.words) == 4**m
        assert len({tuple(w) for w in d.words}) == 4**m
        assert np.all(np.abs(d.weight - np.abs(np.linalg.det(d.J))) < 1e-14)


def test_traces_linear_closed_forms(linear_table):
    for m in range(1, 9):
        assert sharp_trace(linear_table, m) == pytest.approx((2**m - 1) ** 2 / 4**m, abs=1e-14)
        assert zeta_trace(linear_table, m) == pytest.approx((2**m - 1) ** 2 / 4**m, abs=1e-14)
        assert flat_trace_coeff(linear_table, 0, m) == pytest.approx(1.0, abs=1e-12)
        assert flat_trace_coeff(linear_table, 1, m) == pytest.approx(2 * 2.0**-m, abs=1e-12)
        assert flat_trace_coeff(linear_table, 2, m) == pytest.approx(4.0**-m, abs=1e-12)


def test_transversality_validation(linear_table):
    worst = min(np.abs(linear_table[m].det_I_minus_J).min() for m in range(1, 9))
    assert worst >= 0.25 * (1 - 1e-6)
    with pytest.raises(TransversalityError):
        lefschetz_sign(np.diag([1.0, 0.5]))
    assert lefschetz_sign(np.diag([2.0, 0.5])) == -1
    assert lefschetz_sign(np.array([[0.3, 0.1], [0.2, 0.4]])) == 1


@given(st.lists(st.floats(-0.9, 0.9), min_size=4, max_size=4))
def test_lefschetz_sign_of_contractions(entries):
    J = 0.45 * np.array(entries).reshape(2, 2)
    # contracting linear maps have det(I - J) > 0
    assert lefschetz_sign(J) == 1


def test_euclidean_fixed_points_and_absent_words():
    b1 = affine_branch(0.5 * np.eye(2), [0.0, 0.0], [0.0, 0.0], 0.8)
    far = affine_branch(0.5 * np.eye(2), [0.0, 0.0], [3.0, 0.0], 0.5)
    system = EuclideanBranchSystem((b1, far), 2)
    p = find_fixed_point(system, (0,))
    assert np.allclose(p.x, 0.0) and p.weight == pytest.approx(1.0)
    # psi_far fixes the origin, which lies outside its box: no record
    assert find_fixed_point(system, (1,)) is None
    table = build_orbit_table(system, 2)
    assert table.count(1) == 1
    assert sharp_trace(table, 2) == pytest.approx(1.0)


def test_admissible_words_respect_successors():
    b = affine_branch(0.5 * np.eye(2), [0.0, 0.0], [0.0, 0.0], 0.8)
    system = EuclideanBranchSystem((b, b), 2, successors={0: [1], 1: [0]})
    assert list(admissible_words(system, 1)) == []
    assert sorted(admissible_words(system, 2)) == [(0, 1), (1, 0)]


def test_orbit_csv_is_deterministic(perturbed_system):
    a = build_orbit_table(perturbed_system, 3).to_csv()
    b = build_orbit_table(perturbed_system, 3).to_csv()
    assert a == b
    header = a.splitlines()[0].split(",")
    assert header == ["period", "word", "x1", "x2", "re_weight", "im_weight", "lefschetz", "det_I_minus_J"]
    assert len(a.splitlines()) == 1 + 1 + 9 + 49


def test_acip_weight_on_linear_model():
    table = build_orbit_table(TorusBranchSystem(linear_model(weight="acip")), 3)
    assert np.allclose(table[2].weight, 1 / 16)
    for m in (1, 2, 3):
        assert zeta_trace(table, m) == pytest.approx((2**m - 1) ** 2 / 4**m, abs=1e-14)
    assert sharp_trace(build_orbit_table(TorusBranchSystem(linear_model()), 3), 3) == pytest.approx(49 / 64)


def test_flat_trace_brute_force(perturbed_system, perturbed_table):
    """Period one: sum of g tr(wedge^k J) / |det(I - J)| over the distinct branch fixed points."""
    found = {}
    for i in range(4):
        p = find_fixed_point(perturbed_system, (i,))
        found.setdefault(tuple(np.round(np.mod(p.x, 1.0), 9) % 1.0), p)
    pts = list(found.values())
    assert len(pts) == perturbed_table.distinct_count(1)
    for k, tr in enumerate([lambda J: 1.0, np.trace, np.linalg.det]):
        ref = sum(p.weight * tr(p.J) / abs(np.linalg.det(np.eye(2) - p.J)) for p in pts)
        assert flat_trace_coeff(perturbed_table, k, 1) == pytest.approx(ref, abs=1e-12)
