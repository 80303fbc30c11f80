import math

import numpy as np
import pytest

from dyndet.dynamics import TorusBranchSystem, torus_grid
from dyndet.series import find_zeros, ruelle_flat_determinant_series
from dyndet.spectra import (
    FormField,
    assemble_transfer_matrix,
    apply_transfer_pointwise,
    duality_check,
    effective_smoothness,
    eigenvalue_csv,
    eigenvalues,
    essential_radius_bound,
    holder_pressure_bound,
    match_zeros_eigenvalues,
    pressure_estimate,
    pressure_from_orbits,
    project_samples,
)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_matrix_matches_pointwise_application(coupled_system, rng, k):
    N = 4
    P = 2 * (2 * N + 1)
    op = assemble_transfer_matrix(coupled_system, k, N)
    x = torus_grid(2, P)
    for _ in range(20):
        f = FormField.random(k, 2, N, rng)
        direct = project_samples(apply_transfer_pointwise(coupled_system, f, x), 2, N, P)
        assert np.abs(op.apply(f).coeffs - direct).max() < 1e-10


def test_linear_eigenvalues(linear_system):
    for k, lead in enumerate([[1.0], [0.5, 0.5], [0.25]]):
        ev = eigenvalues(assemble_transfer_matrix(linear_system, k, 6))
        assert np.allclose(ev[: len(lead)], lead, atol=1e-12)
        # the rest belong to the essential part, far below theta^k e^P
        assert abs(ev[len(lead)]) < 1e-4


def test_pressure_of_acip_is_one(perturbed_system, coupled_system, perturbed_table):
    assert pressure_estimate(perturbed_system) == pytest.approx(1.0, abs=1e-8)
    assert pressure_estimate(coupled_system) == pytest.approx(1.0, abs=1e-8)
    # the orbit estimate converges more slowly
    assert pressure_from_orbits(perturbed_table, 8) == pytest.approx(1.0, abs=0.05)


def test_holder_bound_dominates_pressure(coupled_system):
    assert holder_pressure_bound(coupled_system, 2.0, 6) >= pressure_estimate(coupled_system) - 1e-6


@pytest.mark.parametrize("k", [0, 1, 2])
def test_eigenvalues_stable_under_mode_refinement(coupled_system, k):
    a = eigenvalues(assemble_transfer_matrix(coupled_system, k, 8), 3)
    b = eigenvalues(assemble_transfer_matrix(coupled_system, k, 12), 3)
    assert np.abs(a - b).max() < 1e-8


def test_assembly_validation(linear_system):
    with pytest.raises(ValueError):
        assemble_transfer_matrix(linear_system, 0, 3)
    with pytest.raises(ValueError):
        assemble_transfer_matrix(linear_system, 3, 4)
    with pytest.raises(MemoryError):
        assemble_transfer_matrix(linear_system, 1, 20, max_dim=1000)
    with pytest.raises(ValueError):
        assemble_transfer_matrix(linear_system, 0, 4, weight="bogus")
    op = assemble_transfer_matrix(linear_system, 1, 4)
    assert op.dim == 2 * 81
    with pytest.raises(ValueError):
        eigenvalues(op, 0)


def test_radius_helpers():
    assert essential_radius_bound(0.5, 1.0, 1, 2.0) == pytest.approx(0.125)
    assert effective_smoothness(math.inf) == 2.0
    assert effective_smoothness(3.0) == 3.0


def test_matching():
    rep = match_zeros_eigenvalues([1.0, 2.0 + 1e-6], [0.5, 1.0, 1e-5], 1e-3)
    assert rep.bijective
    assert rep.max_distance == pytest.approx(1e-6, rel=1e-6)
    assert rep.passed(1e-5) and not rep.passed(1e-7)
    rep = match_zeros_eigenvalues([1.0], [1.0, 0.5], 0.1)
    assert not rep.bijective and len(rep.unmatched_inverse_eigenvalues) == 1
    d = rep.to_dict()
    assert d["pairs"][0]["zero"] == [1.0, 0.0]


def test_duality_coupled(coupled_system, coupled_table):
    for k in (0, 2):
        res = duality_check(coupled_system, coupled_table, k, 6, 8)
        assert res.report.bijective
        assert res.report.max_distance < 1e-2
    # at period 6 the near-double zero of d_1 close to 2 is flagged unstable
    res = duality_check(coupled_system, coupled_table, 1, 6, 8)
    near = [z for z in res.zeros if abs(z.z - 2) < 0.05]
    assert near and not any(z.stable for z in near)
    inv = [1 / e for e in res.eigenvalues if abs(e) > res.eigen_bound]
    assert all(min(abs(z.z - q) for q in inv) < 1e-2 for z in near)


def test_d0_zero_matches_leading_eigenvalue(coupled_table, coupled_system):
    zs = find_zeros(ruelle_flat_determinant_series(coupled_table, 0, 6), 1.2)
    ev = eigenvalues(assemble_transfer_matrix(coupled_system, 0, 8), 1)
    assert min(abs(z.z - 1 / ev[0]) for z in zs) < 1e-8


def test_eigenvalue_csv():
    text = eigenvalue_csv([(0, 1.0 + 0j, True), (1, 0.5j, False)])
    assert text.splitlines() == ["k,re,im,modulus,trusted", "0,1,0,1,1", "1,0,0.5,0.5,0"]


def test_custom_weight_is_applied(linear_system):
    op = assemble_transfer_matrix(linear_system, 0, 4, weight=lambda y, J, g: 2 * g)
    assert eigenvalues(op, 1)[0] == pytest.approx(2.0)
    assert op.weight_kind == "custom"
    assert isinstance(linear_system, TorusBranchSystem)


def test_linear_mode_halving():
    """Doubling with g = 1/4: e_kappa maps to e_{kappa/2} when kappa is even, otherwise to 0."""
    from dyndet.dynamics import linear_model
    from dyndet.spectra import mode_list

    N = 8
    op = assemble_transfer_matrix(TorusBranchSystem(linear_model()), 0, N)
    modes = [tuple(m) for m in mode_list(2, N)]
    for kappa in [(0, 0), (2, 4), (-6, 2), (1, 0), (3, -5), (8, 8)]:
        col = op.matrix[:, modes.index(kappa)]
        expect = np.zeros_like(col)
        if kappa[0] % 2 == 0 and kappa[1] % 2 == 0:
            expect[modes.index((kappa[0] // 2, kappa[1] // 2))] = 1.0
        assert np.abs(col - expect).max() < 1e-12
    ev = eigenvalues(op)
    assert abs(ev[0] - 1) < 1e-12 and abs(ev[1]) < 1e-4


def test_pressure_of_constant_weights():
    from dyndet.dynamics import linear_model

    assert pressure_estimate(TorusBranchSystem(linear_model())) == pytest.approx(1.0, abs=1e-12)
    assert pressure_estimate(TorusBranchSystem(linear_model(weight=0.5))) == pytest.approx(2.0, abs=1e-12)
    assert essential_radius_bound(0.5, 1.0, 0, 2) == pytest.approx(0.25)
