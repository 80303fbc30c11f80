"""Periodic points of branch-word compositions and the traces built from them.

Torus mode tabulates Fix f^m directly: each class k in Z^n / (A^m - I) Z^n
carries exactly one solution of F^m(x) = x + k, found by Newton's method on
the lift.  The branch word of each point is read off its orbit.  Euclidean
mode (finite local branch systems on R^n) runs over admissible words and
finds one fixed point per word by Banach iteration.

Both modes produce per-record arrays (word, x, J = D psi_w^m(x), weight
product), and all traces are sums over these records.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np
from sympy import Matrix
from sympy.matrices.normalforms import hermite_normal_form

from .dynamics import (
    EuclideanBranchSystem,
    ModelError,
    TorusBranchSystem,
    box_grid,
    compose_word,
    lattice_representatives,
    lift_inverse,
)
from .forms import exterior_trace

TRANSVERSALITY_TOL = 1e-10


class TransversalityError(ArithmeticError):
    """det(I - J) vanishes (to tolerance) at a tabulated fixed point."""


class EnumerationError(RuntimeError):
    """A word's fixed point could not be located; words are never dropped silently."""


def lefschetz_sign(J) -> int:
    """sgn det(I - J) for a single n x n matrix."""
    J = np.asarray(J, dtype=float)
    d = float(np.linalg.det(np.eye(J.shape[-1]) - J))
    if abs(d) <= TRANSVERSALITY_TOL:
        raise TransversalityError(f"det(I - J) = {d:.3e} is not transversal")
    return 1 if d > 0 else -1


@dataclass(frozen=True)
class PeriodicPoint:
    word: tuple[int, ...]
    x: np.ndarray
    J: np.ndarray
    weight: complex
    lefschetz: int

    @property
    def period(self) -> int:
        return len(self.word)


@dataclass(frozen=True)
class PeriodData:
    """Columnar storage for one period: one row per (word, fixed point) record."""

    words: np.ndarray  # (N, m) int
    x: np.ndarray  # (N, n)
    J: np.ndarray  # (N, n, n)
    weight: np.ndarray  # (N,) complex

    @property
    def det_I_minus_J(self) -> np.ndarray:
        n = self.J.shape[-1]
        return np.linalg.det(np.eye(n) - self.J)

    @property
    def lefschetz(self) -> np.ndarray:
        return np.sign(self.det_I_minus_J).astype(int)

    def __len__(self):
        return len(self.weight)


@dataclass
class PeriodicOrbitTable:
    """Periodic records for periods 1..max_period of a branch system."""

    system: object
    periods: dict = field(default_factory=dict)

    @property
    def max_period(self) -> int:
        return max(self.periods, default=0)

    @property
    def n(self) -> int:
        return self.system.n

    def __getitem__(self, m: int) -> PeriodData:
        if m not in self.periods:
            raise KeyError(f"period {m} not tabulated (max {self.max_period})")
        return self.periods[m]

    def count(self, m: int) -> int:
        return len(self[m])

    def points(self, m: int):
        d = self[m]
        sgn = d.lefschetz
        for i in range(len(d)):
            yield PeriodicPoint(tuple(int(v) for v in d.words[i]), d.x[i], d.J[i], complex(d.weight[i]), int(sgn[i]))

    def distinct_count(self, m: int, decimals: int = 9) -> int:
        """Number of distinct points (rounded to 1e-9, mod 1 in torus mode)."""
        x = self[m].x
        if isinstance(self.system, TorusBranchSystem):
            x = np.mod(x, 1.0)
            x = np.where(np.round(x, decimals) >= 1.0, 0.0, x)
        r = np.round(x, decimals) + 0.0
        return len(np.unique(r, axis=0))

    def sharp_trace(self, m: int) -> complex:
        return sharp_trace(self, m)

    def flat_trace(self, k: int, m: int) -> complex:
        return flat_trace_coeff(self, k, m)

    def to_csv(self) -> str:
        return orbit_table_csv(self)


# -- torus mode -------------------------------------------------------------------


def _reduce_digits(q, H):
    """Reduce integer vectors q modulo the column lattice of upper triangular H."""
    q = q.copy()
    n = H.shape[0]
    for i in range(n - 1, -1, -1):
        t = np.floor_divide(q[..., i], H[i, i])
        q -= t[..., None] * H[:, i]
    return q


def torus_fixed_points(system: TorusBranchSystem, m: int, tol: float = 1e-13, max_iter: int = 50) -> PeriodData:
    """All points of Fix f^m with words, Jacobians D f^{-m} and weight products."""
    if m < 1:
        raise ValueError("period must be >= 1")
    model = system.model
    n = model.n
    A = np.array(model.A, dtype=np.int64)
    B = np.linalg.matrix_power(A, m) - np.eye(n, dtype=np.int64)
    if round(abs(np.linalg.det(B.astype(float)))) == 0:
        raise TransversalityError("A^m - I is singular: non-isolated periodic points")
    ks = lattice_representatives(B).astype(float)
    x = np.linalg.solve(B.astype(float), ks.T).T
    eye = np.eye(n)
    nonlinear = bool(model.epsilon and model.perturbation)
    if nonlinear:
        # forward Newton converges fast for most classes; the rest are
        # finished by the contraction x -> G^m(x + k), which always converges
        pending = np.ones(len(x), dtype=bool)
        for _ in range(12):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            xa = x[idx]
            y, D = xa.copy(), np.broadcast_to(eye, xa.shape + (n,)).copy()
            for _ in range(m):
                D = model.jacobian(y) @ D
                y = model.lift(y)
            step = np.linalg.solve(D - eye, (y - xa - ks[idx])[..., None])[..., 0]
            x[idx] = xa - step
            # one extra pass after the step drops below tol
            pending[idx] = np.abs(step).max(axis=-1) > tol * 1e3
        if pending.any():
            x[pending] = _inverse_fixed_points(model, m, x[pending], ks[pending], tol, max_iter)
    x = np.mod(x, 1.0)
    # orbit, Jacobian and weights at the converged points
    D = np.broadcast_to(eye, x.shape + (n,)).copy()
    weight = np.ones(len(x), dtype=complex)
    H = np.array(system_hnf(system), dtype=np.int64)
    digits = np.empty((len(x), m), dtype=np.int64)
    radix = tuple(int(H[i, i]) for i in range(n))
    cur = x
    for s in range(m):
        weight = weight * model.weight_at(cur)
        D = model.jacobian(cur) @ D
        img = model.lift(cur)
        nxt = np.mod(img, 1.0) if s < m - 1 else x
        q = np.rint(img - nxt).astype(np.int64)
        red = _reduce_digits(q, H)
        # offsets are the box 0 <= j_i < H_ii in C order
        digits[:, s] = np.ravel_multi_index(tuple(red.T), radix)
        cur = nxt
    J = np.linalg.inv(D)
    words = digits[:, ::-1].copy()
    return PeriodData(words, x, J, weight)


def _inverse_fixed_points(model, m, x, ks, tol, max_iter):
    for _ in range(max_iter):
        y = x + ks
        for _ in range(m):
            y = lift_inverse(model, y)
        delta = np.abs(y - x).max(initial=0.0)
        x = y
        if delta <= tol:
            return x
    raise EnumerationError(f"fixed points of period {m} did not converge (last change {delta:.2e})")


def system_hnf(system: TorusBranchSystem):
    return hermite_normal_form(Matrix(np.array(system.model.A).tolist())).tolist()


def torus_word_fixed_points(system: TorusBranchSystem, m: int, tol: float = 1e-14, max_iter: int = 200) -> PeriodData:
    """Per-word view: the unique R^n fixed point of each lifted word composition.

    There are |det A|^m records.  Reduced mod 1 they land in Fix f^m, but
    distinct words may share a point, and for some A (e.g. -2 I) some points
    of Fix f^m are reached by no word.
    """
    n = system.n
    D = len(system)
    words = np.array(list(itertools.product(range(D), repeat=m)), dtype=np.int64)
    offs = system.offsets.astype(float)
    y = np.zeros((len(words), n))
    for it in range(max_iter):
        z = y
        for ell in range(m):
            z = _lift_branch(system, z + offs[words[:, ell]])
        delta = np.abs(z - y).max(initial=0.0)
        y = z
        if delta <= tol:
            break
    else:
        raise EnumerationError(f"Banach iteration for period {m} did not contract")
    J = np.broadcast_to(np.eye(n), y.shape + (n,)).copy()
    weight = np.ones(len(y), dtype=complex)
    z = y
    for ell in range(m):
        z = _lift_branch(system, z + offs[words[:, ell]])
        J = np.linalg.inv(system.model.jacobian(z)) @ J
        weight = weight * system.model.weight_at(z)
    return PeriodData(words, y, J, weight)


def _lift_branch(system, target):
    return lift_inverse(system.model, target, system.tol)


# -- Euclidean mode ---------------------------------------------------------------


def find_fixed_point(system, word, tol: float = 1e-14, max_iter: int = 500):
    """Unique fixed point of psi_w for a word, or ``None`` if its weight product vanishes.

    For torus systems the lifted word composition is used.
    """
    word = tuple(int(w) for w in word)
    if len(word) < 1:
        raise ValueError("word length must be >= 1")
    if isinstance(system, TorusBranchSystem):
        x = np.zeros(system.n)
        for _ in range(max_iter):
            nx = _torus_lifted(system, word, x)
            if np.abs(nx - x).max() <= tol:
                x = nx
                break
            x = nx
        else:
            raise EnumerationError(f"no fixed point found for word {word}")
        J, w = _torus_word_data(system, word, x)
        return PeriodicPoint(word, x, J, w, lefschetz_sign(J))
    x = _euclid_fixed_point(system, word, tol, max_iter)
    if x is None or not system.branches[word[0]].contains(x):
        return None
    J, w = _euclid_word_data(system, word, x[None])
    if w[0] == 0:
        return None
    return PeriodicPoint(word, x, J[0], complex(w[0]), lefschetz_sign(J[0]))


def _torus_lifted(system, word, x):
    offs = system.offsets.astype(float)
    for w in word:
        x = _lift_branch(system, x + offs[w])
    return x


def _torus_word_data(system, word, x):
    offs = system.offsets.astype(float)
    J = np.eye(system.n)
    wt = 1.0 + 0j
    for w in word:
        x = _lift_branch(system, x + offs[w])
        J = np.linalg.inv(system.model.jacobian(x)) @ J
        wt *= complex(system.model.weight_at(x))
    return J, wt


def _euclid_fixed_point(system: EuclideanBranchSystem, word, tol, max_iter):
    """Fixed point of psi_w, or None when the word provably has none on its domain."""
    comp = compose_word(system, word)
    lo, hi = (np.asarray(v, dtype=float) for v in system.branches[word[0]].domain)
    x = 0.5 * (lo + hi)
    width = float(np.max(hi - lo))
    for _ in range(max_iter):
        nx = comp(x)
        if not np.all(np.isfinite(nx)) or not system.branches[word[0]].contains(nx, margin=width):
            break
        if np.abs(nx - x).max() <= tol:
            return nx
        x = nx
    # no convergence (e.g. the formula is only piecewise a contraction): Newton
    # from the best grid points, then a Lipschitz certificate that no fixed
    # point exists, on successively finer grids
    eye = np.eye(system.n)
    for res in (24, 96):
        probe = box_grid((lo, hi), res)
        y, J = comp.lift_with_jacobian(probe)
        gap = np.linalg.norm(y - probe, axis=-1)
        for s in probe[np.argsort(gap)[:4]]:
            x = s
            for _ in range(50):
                yx, Jx = comp.lift_with_jacobian(x)
                try:
                    x = x - np.linalg.solve(Jx - eye, yx - x)
                except np.linalg.LinAlgError:
                    break
                if not np.all(np.isfinite(x)):
                    break
                if np.abs(comp(x) - x).max() <= 1e-12:
                    return x
        half_diag = 0.5 * float(np.linalg.norm(hi - lo)) / res
        lip = 1.0 + float(np.linalg.norm(J, ord=2, axis=(-2, -1)).max())
        if gap.min() > lip * half_diag:
            return None
    raise EnumerationError(f"no fixed point found for word {word}")


def _euclid_word_data(system, word, x):
    """Jacobian and weight product along the orbit; weight 0 if the orbit leaves a domain."""
    n = system.n
    J = np.broadcast_to(np.eye(n), x.shape + (n,)).copy()
    wt = np.ones(len(x), dtype=complex)
    for w in word:
        b = system.branches[w]
        inside = b.contains(x)
        wt = wt * np.where(inside, b.weight(x), 0.0)
        J = b.dpsi(x) @ J
        x = b.psi(x)
    return J, wt


def admissible_words(system: EuclideanBranchSystem, m: int):
    """Words (w_1..w_m) with w_{l+1} allowed after w_l, cyclically closed."""
    def extend(prefix):
        if len(prefix) == m:
            if m == 1 or prefix[0] in system.next_branches(prefix[-1]):
                yield tuple(prefix)
            return
        for nxt in system.next_branches(prefix[-1]):
            yield from extend(prefix + [nxt])

    for start in range(len(system)):
        if m > 1 or start in system.next_branches(start) or system.successors is None:
            yield from extend([start])


def euclidean_fixed_points(system: EuclideanBranchSystem, m: int) -> PeriodData:
    rec_w, rec_x, rec_J, rec_g = [], [], [], []
    for word in admissible_words(system, m):
        p = find_fixed_point(system, word)
        if p is None:
            continue
        rec_w.append(word)
        rec_x.append(p.x)
        rec_J.append(p.J)
        rec_g.append(p.weight)
    n = system.n
    return PeriodData(
        np.array(rec_w, dtype=np.int64).reshape(-1, m),
        np.array(rec_x, dtype=float).reshape(-1, n),
        np.array(rec_J, dtype=float).reshape(-1, n, n),
        np.array(rec_g, dtype=complex),
    )


def build_orbit_table(system, max_period: int = 8) -> PeriodicOrbitTable:
    if max_period < 1:
        raise ValueError("max_period must be >= 1")
    table = PeriodicOrbitTable(system)
    for m in range(1, max_period + 1):
        if isinstance(system, TorusBranchSystem):
            table.periods[m] = torus_fixed_points(system, m)
        else:
            table.periods[m] = euclidean_fixed_points(system, m)
    return table


# -- traces -----------------------------------------------------------------------


def weight_product(system, word, x) -> complex:
    """g^(m)_w(x) = prod_l g_{w_l}(psi^{l-1} x); zero if the composition leaves a domain."""
    word = tuple(int(w) for w in word)
    x = np.asarray(x, dtype=float)
    if isinstance(system, TorusBranchSystem):
        return _torus_word_data(system, word, x)[1]
    return complex(_euclid_word_data(system, word, x[None])[1][0])


def sharp_trace(table: PeriodicOrbitTable, m: int) -> complex:
    """sum over records of g^(m) L(x, psi^m_w)."""
    d = table[m]
    return complex(np.sum(d.weight * d.lefschetz))


def flat_trace_coeff(table: PeriodicOrbitTable, k: int, m: int) -> complex:
    """sum over records of g^(m) tr Lambda^k(J) / det(I - J)."""
    if not 0 <= k <= table.n:
        raise ValueError(f"form degree {k} outside 0..{table.n}")
    d = table[m]
    return complex(np.sum(d.weight * exterior_trace(d.J, k) / d.det_I_minus_J))


def zeta_trace(table: PeriodicOrbitTable, m: int) -> complex:
    """sum over records of g^(m), with no sign."""
    return complex(np.sum(table[m].weight))


# -- export -----------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v) + 0.0, ".17g")


def orbit_table_csv(table: PeriodicOrbitTable) -> str:
    n = table.n
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["period", "word"] + [f"x{i + 1}" for i in range(n)] + ["re_weight", "im_weight", "lefschetz", "det_I_minus_J"])
    for m in sorted(table.periods):
        d = table[m]
        det = d.det_I_minus_J
        sgn = d.lefschetz
        for i in range(len(d)):
            w.writerow(
                [m, "-".join(str(int(v)) for v in d.words[i])]
                + [_fmt(v) for v in d.x[i]]
                + [_fmt(d.weight[i].real), _fmt(d.weight[i].imag), int(sgn[i]), _fmt(det[i])]
            )
    return buf.getvalue()


__all__ = [
    "EnumerationError",
    "ModelError",
    "PeriodData",
    "PeriodicOrbitTable",
    "PeriodicPoint",
    "TransversalityError",
    "admissible_words",
    "build_orbit_table",
    "find_fixed_point",
    "flat_trace_coeff",
    "lefschetz_sign",
    "orbit_table_csv",
    "sharp_trace",
    "torus_fixed_points",
    "torus_word_fixed_points",
    "weight_product",
    "zeta_trace",
]
