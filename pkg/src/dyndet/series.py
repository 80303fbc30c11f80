"""Truncated complex power series and the determinant / zeta series built on them."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .orbits import PeriodicOrbitTable, flat_trace_coeff, sharp_trace, zeta_trace


def _fmt(v: float) -> str:
    return format(float(v) + 0.0, ".17g")


class TruncatedSeries:
    """c_0 + c_1 z + ... + c_M z^M, arithmetic modulo z^{M+1}."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs, M: int | None = None):
        c = np.asarray(coeffs, dtype=complex).ravel()
        if M is not None:
            if M < 0:
                raise ValueError("truncation order must be >= 0")
            c = np.concatenate([c[: M + 1], np.zeros(max(0, M + 1 - len(c)), dtype=complex)])
        if len(c) == 0:
            raise ValueError("a series needs at least one coefficient")
        self.coeffs = c

    @property
    def M(self) -> int:
        return len(self.coeffs) - 1

    @classmethod
    def constant(cls, value, M: int) -> "TruncatedSeries":
        c = np.zeros(M + 1, dtype=complex)
        c[0] = value
        return cls(c)

    @classmethod
    def variable(cls, M: int) -> "TruncatedSeries":
        c = np.zeros(M + 1, dtype=complex)
        if M >= 1:
            c[1] = 1.0
        return cls(c)

    @classmethod
    def from_log_sum(cls, traces, sign: float = -1.0) -> "TruncatedSeries":
        """exp(sign * sum_{m>=1} t_m z^m / m) for traces t_1..t_M."""
        t = np.asarray(traces, dtype=complex)
        a = np.zeros(len(t) + 1, dtype=complex)
        a[1:] = sign * t / np.arange(1, len(t) + 1)
        return cls(a).exp()

    def _coerce(self, other) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            return other
        return TruncatedSeries.constant(other, self.M)

    def _common(self, other):
        other = self._coerce(other)
        M = min(self.M, other.M)
        return self.coeffs[: M + 1], other.coeffs[: M + 1], M

    def __add__(self, other):
        a, b, _ = self._common(other)
        return TruncatedSeries(a + b)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(-self.coeffs)

    def __sub__(self, other):
        a, b, _ = self._common(other)
        return TruncatedSeries(a - b)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return TruncatedSeries(self.coeffs * other)
        a, b, M = self._common(other)
        return TruncatedSeries(np.convolve(a, b)[: M + 1])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return TruncatedSeries(self.coeffs / other)
        return self * self._coerce(other).reciprocal()

    def __pow__(self, p: int):
        if not isinstance(p, (int, np.integer)):
            raise TypeError("only integer powers are supported")
        if p < 0:
            return self.reciprocal() ** (-p)
        out = TruncatedSeries.constant(1.0, self.M)
        base = self
        while p:
            if p & 1:
                out = out * base
            base = base * base
            p >>= 1
        return out

    def reciprocal(self) -> "TruncatedSeries":
        c = self.coeffs
        if c[0] == 0:
            raise ZeroDivisionError("series with zero constant term has no reciprocal")
        out = np.zeros_like(c)
        out[0] = 1.0 / c[0]
        for m in range(1, len(c)):
            out[m] = -np.dot(c[1 : m + 1], out[m - 1 :: -1][:m]) / c[0]
        return TruncatedSeries(out)

    def derivative(self) -> "TruncatedSeries":
        c = self.coeffs
        if len(c) == 1:
            return TruncatedSeries([0.0])
        return TruncatedSeries(c[1:] * np.arange(1, len(c)))

    def exp(self) -> "TruncatedSeries":
        """exp of the series through s' = a' s (the constant term is exponentiated separately)."""
        a = self.coeffs
        M = self.M
        k = np.arange(M + 1)
        ka = k * a
        s = np.zeros(M + 1, dtype=complex)
        s[0] = 1.0
        for m in range(1, M + 1):
            s[m] = np.dot(ka[1 : m + 1], s[m - 1 :: -1][:m]) / m
        return TruncatedSeries(s * np.exp(a[0]))

    def log(self) -> "TruncatedSeries":
        c = self.coeffs
        if c[0] == 0:
            raise ValueError("log needs a nonzero constant term")
        q = self.derivative() * self.reciprocal()
        out = np.zeros(self.M + 1, dtype=complex)
        out[0] = np.log(c[0])
        out[1:] = q.coeffs[: self.M] / np.arange(1, self.M + 1)
        return TruncatedSeries(out)

    def truncate(self, M: int) -> "TruncatedSeries":
        return TruncatedSeries(self.coeffs, M)

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def max_abs_diff(self, other) -> float:
        a, b, _ = self._common(other)
        return float(np.max(np.abs(a - b)))

    def __repr__(self):
        return f"TruncatedSeries(M={self.M}, coeffs={np.array2string(self.coeffs, precision=6)})"

    def to_dict(self) -> dict:
        return {"M": self.M, "coeffs": [[float(c.real) + 0.0, float(c.imag) + 0.0] for c in self.coeffs]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TruncatedSeries":
        c = [complex(re, im) for re, im in d["coeffs"]]
        return cls(c, int(d["M"]))


def series_exp_neg_sum(traces, sign: float = -1.0) -> TruncatedSeries:
    """exp(-sum z^m t_m / m); ``sign=+1`` gives the zeta-type exponential."""
    if len(traces) < 1:
        raise ValueError("need at least one trace")
    return TruncatedSeries.from_log_sum(traces, sign)


def _max_order(table: PeriodicOrbitTable, M: int) -> int:
    if M < 1:
        raise ValueError("series order must be >= 1")
    if table.max_period < M:
        raise ValueError(f"orbit table only reaches period {table.max_period} < {M}")
    return M


def sharp_determinant_series(table: PeriodicOrbitTable, M: int) -> TruncatedSeries:
    _max_order(table, M)
    return series_exp_neg_sum([sharp_trace(table, m) for m in range(1, M + 1)])


def zeta_series(table: PeriodicOrbitTable, M: int) -> TruncatedSeries:
    _max_order(table, M)
    return series_exp_neg_sum([zeta_trace(table, m) for m in range(1, M + 1)], sign=+1.0)


def flat_traces(table: PeriodicOrbitTable, k: int, M: int):
    _max_order(table, M)
    return [flat_trace_coeff(table, k, m) for m in range(1, M + 1)]


def ruelle_flat_determinant_series(table: PeriodicOrbitTable, k: int, M: int) -> TruncatedSeries:
    """d_k(z) = exp(-sum_m z^m/m sum_{Fix} g^(m) tr Lambda^k J / det(I - J))."""
    return series_exp_neg_sum(flat_traces(table, k, M))


def alternating_product(dets) -> TruncatedSeries:
    """prod_k d_k^{(-1)^{k+1}}."""
    out = TruncatedSeries.constant(1.0, dets[0].M)
    for k, d in enumerate(dets):
        out = out * (d if k % 2 else d.reciprocal())
    return out


# -- l-regularization ----------------------------------------------------------


def regularizer_series(ell: int, M: int) -> TruncatedSeries:
    """c(w) = 1 - (1 - w) exp(sum_{j<l} w^j / j), a series in w with c = O(w^l)."""
    if ell < 1:
        raise ValueError("regularization order must be >= 1")
    a = np.zeros(M + 1, dtype=complex)
    for j in range(1, min(ell, M + 1)):
        a[j] = 1.0 / j
    one_minus_w = TruncatedSeries(np.array([1.0, -1.0]), M)
    return 1.0 - one_minus_w * TruncatedSeries(a).exp()


def regularized_log_det(traces, ell: int) -> TruncatedSeries:
    """-sum_p (1/p) tr M_{k,l}(z)^p, with scalar traces of powers of M_k.

    M_{k,l}(z) = c(z M_k) is a power series in z M_k, so tr M_{k,l}(z)^p
    = sum_m [c^p]_m z^m t_m.
    """
    t = np.asarray(traces, dtype=complex)
    M = len(t)
    c = regularizer_series(ell, M)
    out = np.zeros(M + 1, dtype=complex)
    cp = TruncatedSeries.constant(1.0, M)
    for p in range(1, M + 1):
        cp = cp * c
        # c^p = O(w^{l p}); nothing left once l p exceeds M
        if np.all(cp.coeffs == 0):
            break
        out[1:] -= cp.coeffs[1:] * t / p
    return TruncatedSeries(out)


def regularized_identity_sides(traces, ell: int):
    """(left, right) sides of Det(Id - M_{k,l}(z)) = Det(Id - z M_k) exp(sum_{j<l} z^j t_j / j)."""
    t = np.asarray(traces, dtype=complex)
    M = len(t)
    if M < ell:
        raise ValueError("series order must be at least the regularization order")
    lhs = regularized_log_det(t, ell).exp()
    corr = np.zeros(M + 1, dtype=complex)
    for j in range(1, ell):
        corr[j] = t[j - 1] / j
    rhs = series_exp_neg_sum(t) * TruncatedSeries(corr).exp()
    return lhs, rhs


def regularized_identity_check(table: PeriodicOrbitTable, k: int, ell: int, M: int, trace: str = "flat") -> float:
    """Max coefficient residual of the l-regularization identity.

    ``trace="flat"`` uses the flat traces of M_k; ``trace="sharp"`` uses the
    sharp traces of M (the same identity for Det^#).
    """
    if ell < 1 or M < ell:
        raise ValueError("need l >= 1 and M >= l")
    _max_order(table, M)
    if trace == "flat":
        t = flat_traces(table, k, M)
    elif trace == "sharp":
        t = [sharp_trace(table, m) for m in range(1, M + 1)]
    else:
        raise ValueError("trace must be 'flat' or 'sharp'")
    lhs, rhs = regularized_identity_sides(t, ell)
    return lhs.max_abs_diff(rhs)


# -- zeros ------------------------------------------------------------------------


@dataclass(frozen=True)
class Zero:
    z: complex
    multiplicity: int
    stable: bool
    trusted: bool = True


@dataclass(frozen=True)
class ZeroSet:
    zeros: tuple[Zero, ...]
    radius: float

    def __len__(self):
        return len(self.zeros)

    def __iter__(self):
        return iter(self.zeros)

    def stable(self):
        return [z for z in self.zeros if z.stable]

    def expanded(self, only_stable: bool = True, only_trusted: bool = True):
        """Zeros repeated by multiplicity."""
        out = []
        for z in self.zeros:
            if (z.stable or not only_stable) and (z.trusted or not only_trusted):
                out.extend([z.z] * z.multiplicity)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "mult", "stable"])
        for z in self.zeros:
            w.writerow([_fmt(z.z.real), _fmt(z.z.imag), z.multiplicity, int(z.stable)])
        return buf.getvalue()


def _poly_roots(coeffs, radius):
    c = np.asarray(coeffs, dtype=complex)
    scale = np.abs(c).max()
    nz = np.flatnonzero(np.abs(c) > 1e-300)
    if len(nz) <= 1:
        return np.array([], dtype=complex)
    c = c[: nz[-1] + 1]
    roots = np.roots(c[::-1])
    return roots[np.abs(roots) < 2.0 * radius + 1.0] if scale > 0 else roots


def _cluster(roots, tol):
    """Group roots closer than tol (single linkage); returns list of arrays."""
    roots = sorted(roots, key=lambda r: (round(r.real, 12), round(r.imag, 12)))
    groups: list[list[complex]] = []
    for r in roots:
        for g in groups:
            if min(abs(r - q) for q in g) < tol:
                g.append(r)
                break
        else:
            groups.append([r])
    return [np.array(g) for g in groups]


def _refine(s: TruncatedSeries, z0: complex, mult: int, steps: int = 30) -> complex:
    """Multiplicity-aware Newton on the truncated polynomial, accepted while |s| decreases."""
    ds = s.derivative()
    z = complex(z0)
    fz = abs(s(z))
    for _ in range(steps):
        d = ds(z)
        if d == 0:
            break
        cand = z - mult * s(z) / d
        fc = abs(s(cand))
        if not fc < fz:
            break
        z, fz = cand, fc
    return z


def _zeros_of(s: TruncatedSeries, radius: float, cluster_tol: float):
    groups = _cluster(_poly_roots(s.coeffs, radius), cluster_tol)
    out = []
    for g in groups:
        mult = len(g)
        z = _refine(s, complex(g.mean()), mult)
        if abs(z) < radius:
            out.append((z, mult))
    return out


def find_zeros(
    s: TruncatedSeries,
    radius: float,
    stability_tol: float = 1e-4,
    cluster_tol: float = 1e-5,
    trusted_radius: float | None = None,
) -> ZeroSet:
    """Zeros of the truncation inside |z| < radius, cross-checked against truncation M - 2."""
    if s.coeffs[0] == 0:
        raise ValueError("series must have a nonzero constant term")
    if radius <= 0:
        raise ValueError("radius must be positive")
    main = _zeros_of(s, radius, cluster_tol)
    if s.M >= 3:
        ref = _zeros_of(s.truncate(s.M - 2), 1.5 * radius + 1.0, cluster_tol)
        ref_pts = [z for z, mu in ref for _ in range(mu)]
    else:
        ref_pts = []
    zeros = []
    for z, mult in sorted(main, key=lambda t: (abs(t[0]), t[0].real, t[0].imag)):
        near = sorted(abs(z - q) for q in ref_pts)
        stable = len(near) >= mult and near[mult - 1] < stability_tol
        trusted = trusted_radius is None or abs(z) < trusted_radius
        zeros.append(Zero(complex(z), mult, bool(stable), bool(trusted)))
    return ZeroSet(tuple(zeros), float(radius))
