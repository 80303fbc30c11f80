"""Flat-trace coefficients of the kneading operators and the order-by-order check.

The kneading operator of degree k is D_k(z) = N_k (Id - z M_k)^{-1} S_k, expanded
as sum_l z^{l+1} N_k M_k^l S_k.  It acts on (k+1)-forms with a matrix kernel

    a(x, y) = sum_w A_w(x) s(Psi_w(x) - y),

summed over branch words w = (w_0, ..., w_l), Psi_w = psi_{w_l} o ... o psi_{w_0}.
Here s(u) is the C(n,k) x C(n,k+1) kernel of S_k (combinations of c u_i/|u|^n),
and A_w(x) collects d g_{w_0}(x), the weights g_{w_i} along the orbit and the
minors of D Psi_w(x).  The coefficient c_{k,l} is the integral of tr a(x, x).

Its density is O(|x - p|^{1-n}) at fixed points p of Psi_w.  It is integrated
with a midpoint rule weighted by 1 - chi(|x - p|/R) plus a polar rule on
chi(|x - p|/R), where chi is the smooth radial cutoff of the homotopy module.

Torus models are first compiled into compactly supported chart branches on
R^n (see :func:`dyndet.dynamics.chart_system`).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .dynamics import EuclideanBranchSystem, TorusBranchSystem, TorusMapModel, chart_system, compose_word
from .forms import minor, multi_indices, wedge_sign
from .homotopy import _direction_rule, _radial_cutoff, _s_coeffs, _sigma_terms, sphere_constant
from .orbits import _euclid_fixed_point, build_orbit_table, sharp_trace

log = logging.getLogger(__name__)

NODE_CLEARANCE = 1e-6


class UnsupportedOrderError(ValueError):
    pass


@dataclass(frozen=True)
class KneadingQuadrature:
    """Budget for the diagonal integrals.

    ``resolution`` midpoint nodes per axis over each branch box, cutoff radius
    ``radius`` around each singular point, and a Gauss x uniform polar rule.
    """

    resolution: int = 32
    radius: float = 0.1
    n_radial: int = 24
    n_angular: int = 32

    def __post_init__(self):
        if self.resolution < 4 or self.n_radial < 2 or self.n_angular < 4:
            raise ValueError("quadrature budget too small")
        if not self.radius > 0:
            raise ValueError("cutoff radius must be positive")

    def refined(self) -> "KneadingQuadrature":
        return replace(self, resolution=2 * self.resolution, n_radial=2 * self.n_radial, n_angular=2 * self.n_angular)


def as_branch_system(system):
    """Euclidean branch system for kneading integrals (torus models go through charts)."""
    if isinstance(system, TorusMapModel):
        return chart_system(system)
    if isinstance(system, TorusBranchSystem):
        return chart_system(system.model)
    if isinstance(system, EuclideanBranchSystem):
        return system
    raise TypeError(f"unsupported system type {type(system).__name__}")


# -- kernels ----------------------------------------------------------------------


def _s_matrix(n: int, k: int, u):
    """Kernel of S_k at displacement u: shape (..., C(n,k), C(n,k+1))."""
    rows, cols = multi_indices(n, k), multi_indices(n, k + 1)
    r = np.linalg.norm(u, axis=-1)
    K = sphere_constant(n) * u / np.where(r == 0, np.inf, r)[..., None] ** n
    out = np.zeros(u.shape[:-1] + (len(rows), len(cols)))
    for (I, Kp, i), a in _s_coeffs(n)[k].items():
        out[..., rows.index(I), cols.index(Kp)] += a * K[..., i]
    return out


def _word_factor(system: EuclideanBranchSystem, word, k: int, x):
    """(Psi_w(x), A_w(x)) with A_w of shape (..., C(n,k+1), C(n,k))."""
    n = system.n
    b0 = system.branches[word[0]]
    mask = b0.contains(x)
    scal = np.where(mask, 1.0, 0.0).astype(complex)
    dg = b0.dweight(x)
    y = b0.psi(x)
    J = b0.dpsi(x)
    for w in word[1:]:
        b = system.branches[w]
        inside = b.contains(y)
        scal = scal * np.where(inside, b.weight(y), 0.0)
        J = b.dpsi(y) @ J
        y = b.psi(y)
    rows, cols = multi_indices(n, k + 1), multi_indices(n, k)
    A = np.zeros(x.shape[:-1] + (len(rows), len(cols)), dtype=complex)
    for a, K in enumerate(rows):
        for j in K:
            Ip = tuple(i for i in K if i != j)
            sgn = wedge_sign((j,), Ip)
            coef = sgn * dg[..., j] * scal
            for c, I in enumerate(cols):
                A[..., a, c] += coef * minor(J, I, Ip)
    return y, A


@dataclass(frozen=True)
class KneadingKernelCoeff:
    """Kernel K_{k,l} of N_k M_k^l S_k on (k+1)-forms, as a sum over words."""

    system: EuclideanBranchSystem
    k: int
    ell: int

    def __post_init__(self):
        if not 0 <= self.k <= self.system.n - 1:
            raise ValueError(f"degree k must lie in 0..{self.system.n - 1}")
        if self.ell < 0:
            raise ValueError("ell must be >= 0")

    def words(self):
        """Admissible words of length ell + 1 in lexicographic order."""
        out = []

        def extend(prefix):
            if len(prefix) == self.ell + 1:
                out.append(tuple(prefix))
                return
            for nxt in self.system.next_branches(prefix[-1]):
                extend(prefix + [int(nxt)])

        for start in range(len(self.system)):
            extend([start])
        return sorted(out)

    def word_kernel(self, word, x, y):
        Psi, A = _word_factor(self.system, word, self.k, x)
        return A @ _s_matrix(self.system.n, self.k, Psi - y)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        total = 0.0
        for w in self.words():
            total = total + self.word_kernel(w, x, y)
        return total

    def word_density(self, word, x):
        """tr a_w(x, x)."""
        Psi, A = _word_factor(self.system, word, self.k, x)
        return np.einsum("...ab,...ba->...", A, _s_matrix(self.system.n, self.k, Psi - x))

    def pullback_density(self, word, x):
        """Coefficient of dx_1..n in the diagonal pullback of the form kernel.

        Equals (-1)^{k+1} times :meth:`word_density`.
        """
        n, k = self.system.n, self.k
        Psi, A = _word_factor(self.system, word, k, x)
        u = Psi - x
        r = np.linalg.norm(u, axis=-1)
        rows, cols = multi_indices(n, k + 1), multi_indices(n, k)
        out = np.zeros(x.shape[:-1], dtype=complex)
        for I, L, i, coef in _sigma_terms(n)[k]:
            val = coef * u[..., i] / r**n
            for a, K in enumerate(rows):
                s = wedge_sign(K, L)
                if s == 0:
                    continue
                out = out + s * A[..., a, cols.index(I)] * val
        return out


# -- quadrature ---------------------------------------------------------------------


def _singular_points(system, word):
    b0 = system.branches[word[0]]
    p = _euclid_fixed_point(system, word, 1e-14, 500)
    if p is None or not b0.contains(p, margin=1e-9):
        return []
    return [np.asarray(p, dtype=float)]


def _lattice(domain, P: int, points):
    """Midpoint nodes over the box, shifted when a singular point sits on a node."""
    lo, hi = (np.asarray(v, dtype=float) for v in domain)
    h = (hi - lo) / P
    shift = 0.0
    for attempt in range(4):
        axes = [lo[i] + h[i] * (np.arange(P) + 0.5 + shift) for i in range(len(lo))]
        nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
        close = any(np.linalg.norm(nodes - p, axis=-1).min() < NODE_CLEARANCE for p in points)
        if not close:
            break
        shift = (attempt + 1) * 0.25
        log.info("singular point within %.1e of a node; shifting the lattice by %.2f cells", NODE_CLEARANCE, shift)
    if shift:
        # nodes that left the box are replaced by the wrapped row below lo
        nodes = np.where(nodes > hi, nodes - (hi - lo), nodes)
    return nodes, float(np.prod(h))


def _polar_nodes(n: int, centre, R: float, n_radial: int, n_angular: int):
    gr, gw = np.polynomial.legendre.leggauss(n_radial)
    rr = 0.5 * (gr + 1.0) * R
    rw = 0.5 * gw * R * _radial_cutoff(rr / R) * rr ** (n - 1)
    dirs, dw = _direction_rule(n, n_angular)
    nodes = centre + (rr[:, None, None] * dirs[None]).reshape(-1, n)
    return nodes, (rw[:, None] * dw[None]).ravel()


def _integrate(density, n, domain, points, quad: KneadingQuadrature):
    """int density dx over the box with cut-off + polar treatment of ``points``."""
    nodes, vol = _lattice(domain, quad.resolution, points)
    far = np.ones(len(nodes))
    for p in points:
        far = far * (1.0 - _radial_cutoff(np.linalg.norm(nodes - p, axis=-1) / quad.radius))
    keep = far > 0
    total = complex(np.sum(far[keep] * density(nodes[keep])) * vol)
    for i, p in enumerate(points):
        pn, pw = _polar_nodes(n, p, quad.radius, quad.n_radial, quad.n_angular)
        # remaining cutoffs of the other singular points
        other = np.ones(len(pn))
        for j, q in enumerate(points):
            if j != i:
                other = other * (1.0 - _radial_cutoff(np.linalg.norm(pn - q, axis=-1) / quad.radius))
        total += complex(np.sum(pw * other * density(pn)))
    return total


def singular_point_map(system, words) -> dict:
    """Fixed points of Psi_w inside the first branch box, per word."""
    return {tuple(w): _singular_points(system, w) for w in words}


def word_integral(kernel: KneadingKernelCoeff, word, quad: KneadingQuadrature, points=None) -> complex:
    """int tr a_w(x, x) dx for one word."""
    system = kernel.system
    points = _singular_points(system, word) if points is None else points
    return _integrate(lambda x: kernel.word_density(word, x), system.n, system.branches[word[0]].domain, points, quad)


def kneading_trace_coeff(
    system, k: int, ell: int, quad: KneadingQuadrature | None = None, words=None, threads: int = 1, singular=None
):
    """Coefficient of z^{l+1} in tr^flat D_k(z).

    Word contributions are reduced in sorted word order, so the result does not
    depend on ``words`` ordering or on ``threads``.
    """
    quad = quad or KneadingQuadrature()
    system = as_branch_system(system)
    kernel = KneadingKernelCoeff(system, k, ell)
    words = kernel.words() if words is None else [tuple(int(v) for v in w) for w in words]
    for w in words:
        if len(w) != ell + 1:
            raise ValueError(f"word {w} has length {len(w)}, expected {ell + 1}")
    words = sorted(words)
    singular = singular if singular is not None else {}

    def one(w):
        return word_integral(kernel, w, quad, singular.get(w))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, words))
    else:
        parts = [one(w) for w in words]
    return complex(math.fsum(p.real for p in parts), math.fsum(p.imag for p in parts))


@dataclass(frozen=True)
class KneadingCoefficient:
    k: int
    ell: int
    value: complex
    refinement_residual: float


def kneading_table(system, ks=None, ells=(0,), quad: KneadingQuadrature | None = None, threads: int = 1):
    """Coefficients c_{k,l} with the change under one refinement of the budget."""
    quad = quad or KneadingQuadrature()
    system = as_branch_system(system)
    ks = range(system.n) if ks is None else ks
    out = []
    for k in ks:
        for ell in ells:
            v = kneading_trace_coeff(system, k, ell, quad, threads=threads)
            v2 = kneading_trace_coeff(system, k, ell, quad.refined(), threads=threads)
            out.append(KneadingCoefficient(k, ell, v2, abs(v2 - v)))
    return out


def kneading_csv(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["k", "ell", "re", "im", "refinement_residual"])
    for r in rows:
        wr.writerow([r.k, r.ell, format(r.value.real + 0.0, ".17g"), format(r.value.imag + 0.0, ".17g"), format(r.refinement_residual, ".6e")])
    return buf.getvalue()


# -- the square of the order-one operator ---------------------------------------


def _inverse_branch(branch, x, seed, iters: int = 30):
    """Solve psi(b) = x by Newton from ``seed``."""
    b = np.array(seed, dtype=float)
    for _ in range(iters):
        res = branch.psi(b) - x
        step = np.linalg.solve(branch.dpsi(b), res[..., None])[..., 0]
        b = b - step
        if np.abs(step).max() < 1e-14:
            break
    return b


def squared_trace(system: EuclideanBranchSystem, k: int, quad: KneadingQuadrature | None = None) -> complex:
    """int int tr a(x, w) a(w, x) dw dx for the kernel a of N_k S_k (n = 2 only).

    Inner integrals over w resolve the singular points a = psi(x) and
    b = psi'^{-1}(x) with shrinking polar disks; outer integrals are cut off
    around the fixed points of psi' o psi.
    """
    quad = quad or KneadingQuadrature()
    n = system.n
    if n != 2:
        raise UnsupportedOrderError("the squared kneading trace is implemented for n = 2")
    kern = KneadingKernelCoeff(system, k, 0)
    words = kern.words()
    per_pair = []
    for (w1,) in words:
        b1 = system.branches[w1]
        for (w2,) in words:
            b2 = system.branches[w2]
            if w2 not in system.next_branches(w1) or w1 not in system.next_branches(w2):
                continue
            lo2, hi2 = (np.asarray(v, dtype=float) for v in b2.domain)
            wnodes, wvol = _lattice(b2.domain, quad.resolution, [])
            Pw, Aw = _word_factor(system, (w2,), k, wnodes)

            def inner(x):
                x = np.atleast_2d(x)
                Px, Ax = _word_factor(system, (w1,), k, x)
                out = np.zeros(len(x), dtype=complex)
                for t in range(len(x)):
                    a = Px[t]
                    b = _inverse_branch(b2, x[t], x[t])
                    rho = min(quad.radius, np.linalg.norm(a - b) / 2.5)
                    left = Ax[t] @ _s_matrix(n, k, a - wnodes)
                    right = Aw @ _s_matrix(n, k, Pw - x[t])
                    f = np.einsum("qab,qba->q", left, right)
                    cut = np.ones(len(wnodes))
                    if rho > 0:
                        for c0 in (a, b):
                            cut = cut * (1.0 - _radial_cutoff(np.linalg.norm(wnodes - c0, axis=-1) / rho))
                    total = np.sum(np.where(cut > 0, cut * f, 0.0)) * wvol
                    if rho > 0:
                        for c0 in (a, b):
                            pn, pw = _polar_nodes(n, c0, rho, quad.n_radial, quad.n_angular)
                            Pp, Ap = _word_factor(system, (w2,), k, pn)
                            lp = Ax[t] @ _s_matrix(n, k, a - pn)
                            rp = Ap @ _s_matrix(n, k, Pp - x[t])
                            total += np.sum(pw * np.einsum("qab,qba->q", lp, rp))
                    out[t] = total
                return out

            pts = _singular_points(system, (w1, w2))
            per_pair.append(_integrate(inner, n, b1.domain, pts, quad))
    return complex(math.fsum(p.real for p in per_pair), math.fsum(p.imag for p in per_pair))


# -- the identity -----------------------------------------------------------------


def _sharp_traces(system, order):
    if isinstance(system, TorusMapModel):
        system = TorusBranchSystem(system)
    table = build_orbit_table(system, order)
    return [sharp_trace(table, m) for m in range(1, order + 1)]


def mt_identity_check(system, order: int = 1, quad: KneadingQuadrature | None = None, threads: int = 1):
    """|LHS - RHS| of the z^m log coefficients of the kneading identity, m = 1..order.

    LHS: -tr^#(M^m)/m.  RHS: sum_k (-1)^{k+1} [z^m] log Det^flat(Id + D_k(z)).
    """
    if order not in (1, 2):
        raise UnsupportedOrderError("only orders 1 and 2 are supported")
    quad = quad or KneadingQuadrature()
    branch = as_branch_system(system)
    if order == 2 and not isinstance(system, EuclideanBranchSystem):
        raise UnsupportedOrderError("order 2 needs a branch system on R^2")
    traces = _sharp_traces(system, order)
    out = []
    points = singular_point_map(branch, KneadingKernelCoeff(branch, 0, 0).words())
    c0 = [kneading_trace_coeff(branch, k, 0, quad, threads=threads, singular=points) for k in range(branch.n)]
    rhs1 = sum((-1) ** (k + 1) * c for k, c in enumerate(c0))
    out.append(abs(-traces[0] - rhs1))
    if order == 2:
        rhs2 = 0.0
        for k in range(branch.n):
            c1 = kneading_trace_coeff(branch, k, 1, quad, threads=threads)
            rhs2 += (-1) ** (k + 1) * (c1 - squared_trace(branch, k, quad) / 2.0)
        out.append(abs(-traces[1] / 2.0 - rhs2))
    return out
