import logging

import numpy as np
import pytest

from dyndet.dynamics import EuclideanBranchSystem, affine_branch, linear_model
from dyndet.kneading import (
    KneadingKernelCoeff,
    KneadingQuadrature,
    UnsupportedOrderError,
    as_branch_system,
    kneading_csv,
    kneading_table,
    kneading_trace_coeff,
    mt_identity_check,
)

SMALL = KneadingQuadrature(16, 0.2, 12, 16)


def two_branch(amplitude=1.0):
    b0 = affine_branch([[0.4, 0.1], [0.0, 0.5]], [0.1, 0.0], [0.0, 0.0], 0.8, amplitude)
    b1 = affine_branch([[0.5, 0.0], [0.1, 0.3]], [-0.2, 0.1], [0.1, 0.05], 0.7, 0.7 * amplitude)
    return EuclideanBranchSystem((b0, b1), 2)


@pytest.fixture(scope="module")
def single():
    return EuclideanBranchSystem((affine_branch(0.5 * np.eye(2), [0.0, 0.0], [0.0, 0.0], 0.8),), 2)


def test_zero_weight_gives_zero():
    s = two_branch(0.0)
    for k in range(2):
        assert kneading_trace_coeff(s, k, 0, SMALL) == 0
        assert kneading_trace_coeff(s, k, 1, SMALL) == 0


def test_affine_order_one(single):
    # one contracting branch: the sharp trace is 1 and the identity holds up to quadrature error
    assert mt_identity_check(single, 1, KneadingQuadrature(64))[0] < 1e-3


def test_pullback_density_sign(rng):
    s = two_branch()
    x = rng.uniform(-0.6, 0.6, (40, 2))
    for k in range(2):
        ker = KneadingKernelCoeff(s, k, 1)
        for w in ker.words():
            a = ker.pullback_density(w, x)
            b = ker.word_density(w, x)
            assert np.allclose(a, (-1) ** (k + 1) * b, rtol=1e-12, atol=1e-12)


def test_kernel_is_sum_over_words(rng):
    s = two_branch()
    ker = KneadingKernelCoeff(s, 1, 1)
    x, y = rng.uniform(-0.5, 0.5, (2, 5, 2))
    total = sum(ker.word_kernel(w, x, y) for w in ker.words())
    assert np.allclose(ker(x, y), total)
    assert ker.words() == [(0, 0), (0, 1), (1, 0), (1, 1)]


@pytest.mark.parametrize("ell", [0, 1])
def test_amplitude_scaling(ell):
    a = 1.7
    for k in range(2):
        base = kneading_trace_coeff(two_branch(), k, ell, SMALL)
        scaled = kneading_trace_coeff(two_branch(a), k, ell, SMALL)
        assert scaled == pytest.approx(a ** (ell + 1) * base, rel=1e-12)


def test_word_order_and_threads_do_not_matter():
    s = two_branch()
    ker = KneadingKernelCoeff(s, 0, 1)
    words = ker.words()
    ref = kneading_trace_coeff(s, 0, 1, SMALL)
    assert kneading_trace_coeff(s, 0, 1, SMALL, words=words[::-1]) == ref
    assert kneading_trace_coeff(s, 0, 1, SMALL, threads=3) == ref
    with pytest.raises(ValueError):
        kneading_trace_coeff(s, 0, 1, SMALL, words=[(0,)])


def test_order_two_identity():
    r = mt_identity_check(two_branch(), 2, SMALL)
    assert len(r) == 2
    assert max(r) < 5e-3


def test_unsupported_orders(single):
    with pytest.raises(UnsupportedOrderError):
        mt_identity_check(single, 3)
    with pytest.raises(UnsupportedOrderError):
        mt_identity_check(linear_model(), 2)


def test_refinement_consistency(single):
    rows = kneading_table(single, quad=KneadingQuadrature(32))
    for r in rows:
        assert r.refinement_residual <= 1e-3 * (1 + abs(r.value))
    text = kneading_csv(rows)
    assert text.splitlines()[0] == "k,ell,re,im,refinement_residual"
    assert len(text.splitlines()) == 3


def test_lattice_shift_is_logged(single, caplog):
    # odd resolution puts a midpoint node on the fixed point at the origin
    with caplog.at_level(logging.INFO, logger="dyndet.kneading"):
        v = kneading_trace_coeff(single, 0, 0, KneadingQuadrature(33))
    assert any("shifting the lattice" in m for m in caplog.messages)
    assert np.isfinite(v.real)


def test_quadrature_validation():
    with pytest.raises(ValueError):
        KneadingQuadrature(2)
    with pytest.raises(ValueError):
        KneadingQuadrature(radius=0.0)
    q = KneadingQuadrature().refined()
    assert (q.resolution, q.n_radial, q.n_angular) == (64, 48, 64)
    with pytest.raises(TypeError):
        as_branch_system(3)
    with pytest.raises(ValueError):
        KneadingKernelCoeff(two_branch(), 2, 0)


def test_zero_weight_identity_residuals_vanish():
    assert mt_identity_check(two_branch(0.0), 2, SMALL) == [0.0, 0.0]
