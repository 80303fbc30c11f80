"""Singular kernels sigma_k, the convolution operators S_k and the operators N_k.

Conventions (fixed once and checked by the tests):

* sigma(u) = c sum_i (-1)^i u_i / |u|^n du_1 ^ .. (omit i) .. ^ du_n with
  0-based i and c = Gamma(n/2) / (2 pi^{n/2}), so d sigma = delta.
* sigma(x - y) = sum_k (-1)^n sigma_k(x, y) with sigma_k of degree k in x
  and n - k - 1 in y.
* S_k phi(x) = (-1)^n int_y sigma_k(x, y) ^ phi(y), where the y-volume
  is integrated out from the left:
  int_y dy_1 ^ .. ^ dy_n ^ dx_I f(x, y) = dx_I int f(x, y) dy.
  (For n = 2 this agrees with removing it from the right; for n = 3 only the
  left rule makes d S + S d = Id hold in every degree.)

Every component of S_k phi is then a sum of convolutions with the
derivatives K_i = d_i E of the Green function E, recorded in
:attr:`SigmaKernel.s_coeffs`.

Quadrature.  K_i is split with a smooth radial cutoff chi(|u|/R), R = 4 grid
cells.  The far part (1 - chi) K_i is sampled on the grid (trapezoid rule,
evaluated by FFT convolution).  The near part chi K_i is integrable and
becomes smooth in polar coordinates; a Gauss (radial) x uniform (angular)
rule is applied to the cubic-spline interpolant of the data, which turns it
into a fixed stencil.  Both parts together give one discrete kernel per i.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.signal import fftconvolve

from .forms import complement, exterior_derivative, multi_indices, permutation_sign, wedge_sign
from .smooth import bump, bump_derivative, smooth_step

TWO_PI = 2.0 * np.pi


def sphere_constant(n: int) -> float:
    """Gamma(n/2) / (2 pi^{n/2}) = 1 / |S^{n-1}|."""
    return math.gamma(n / 2.0) / (2.0 * math.pi ** (n / 2.0))


class OnDiagonalError(ValueError):
    pass


# -- kernels ----------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaKernel:
    """Closed-form split of sigma(x - y) into the pieces sigma_k.

    ``terms[k]`` lists (I, L, i, coef): sigma_k = sum coef u_i/|u|^n dx_I ^ dy_L.
    """

    n: int

    @property
    def c(self) -> float:
        return sphere_constant(self.n)

    @property
    def terms(self):
        return _sigma_terms(self.n)

    def sigma(self, u):
        """Components of sigma(u) on du_{J}, |J| = n - 1, shape (..., n)."""
        u = np.asarray(u, dtype=float)
        r = np.linalg.norm(u, axis=-1)
        if np.any(r < 1e-14):
            raise OnDiagonalError("sigma is singular at u = 0")
        out = {}
        for i in range(self.n):
            J = tuple(j for j in range(self.n) if j != i)
            out[J] = self.c * (-1) ** i * u[..., i] / r**self.n
        return out

    def sigma_k(self, k: int, x, y):
        """{(I, L): coefficient of dx_I ^ dy_L} for sigma_k(x, y)."""
        u = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        r = np.linalg.norm(u, axis=-1)
        if np.any(r < 1e-14):
            raise OnDiagonalError("sigma_k is singular on the diagonal")
        out = {}
        for I, L, i, coef in self.terms[k]:
            out[(I, L)] = out.get((I, L), 0.0) + coef * u[..., i] / r**self.n
        return out

    @property
    def s_coeffs(self):
        """A[k] = {(I, K, i): a} with (S_k phi)_I = sum a (K_i * phi_K)."""
        return _s_coeffs(self.n)


@lru_cache(maxsize=None)
def _sigma_terms(n: int):
    c = sphere_constant(n)
    terms = {k: [] for k in range(n)}
    for i in range(n):
        rest = [j for j in range(n) if j != i]
        for kx in range(n):
            for X in combinations(rest, kx):
                Y = tuple(j for j in rest if j not in X)
                # wedge over j in increasing order of (dx_j or -dy_j), reordered to dx_X ^ dy_Y
                keys = [j if j in X else n + j for j in rest]
                sgn = permutation_sign(keys) * (-1) ** len(Y)
                coef = (-1) ** n * c * (-1) ** i * sgn
                terms[kx].append((X, Y, i, coef))
    return {k: tuple(v) for k, v in terms.items()}


@lru_cache(maxsize=None)
def _s_coeffs(n: int):
    c = sphere_constant(n)
    out = {}
    for k, terms in _sigma_terms(n).items():
        acc = {}
        for I, L, i, coef in terms:
            K = complement(n, L)
            key = (I, K, i)
            # dx_I ^ dy_L ^ dy_K = wedge_sign(L, K) (-1)^{k n} dy_1..n ^ dx_I
            sgn = wedge_sign(L, K) * (-1) ** (k * n)
            acc[key] = acc.get(key, 0.0) + (-1) ** n * coef * sgn / c
        out[k] = {key: v for key, v in acc.items() if v != 0}
    return out


def sigma_eval(kernel: SigmaKernel, k: int, x, y):
    """Component values of sigma_k(x, y) keyed by (I, L)."""
    if not 0 <= k <= kernel.n - 1:
        raise ValueError(f"sigma_k needs 0 <= k <= {kernel.n - 1}")
    return kernel.sigma_k(k, x, y)


@dataclass(frozen=True)
class GreenKernel:
    """E(u) = log|u| / (2 pi) for n = 2, -c |u|^{2-n} / (n - 2) otherwise (times du_1..n)."""

    n: int

    def __call__(self, u):
        u = np.asarray(u)
        s = np.sum(u * u, axis=-1)
        if self.n == 2:
            return 0.25 / math.pi * np.log(s)
        return -sphere_constant(self.n) / (self.n - 2) * s ** ((2 - self.n) / 2.0)

    def gradient(self, u):
        """K_i = d_i E = c u_i / |u|^n."""
        u = np.asarray(u, dtype=float)
        r = np.linalg.norm(u, axis=-1)
        return sphere_constant(self.n) * u / r[..., None] ** self.n

    def codifferential(self, u, step: float = 1e-20):
        """d^*(E du_1..n) = sum_j (-1)^j d_j E du_{omit j} (0-based j), by complex-step derivatives."""
        u = np.asarray(u, dtype=float)
        out = {}
        for j in range(self.n):
            du = np.zeros(self.n, dtype=complex)
            du[j] = 1j * step
            dE = np.imag(self(u + du)) / step
            out[tuple(i for i in range(self.n) if i != j)] = (-1) ** j * dE
        return out


def fourier_symbols(n: int, xi):
    """Symbols of d_k and S_k at a frequency xi != 0 (f^(xi) = int f e^{-2 pi i x.xi}).

    Returns (d, S): dicts k -> matrix acting on component vectors ordered by
    :func:`multi_indices`.
    """
    xi = np.asarray(xi, dtype=float)
    K_hat = -1j * xi / (TWO_PI * np.dot(xi, xi))
    d, S = {}, {}
    for k in range(n):
        rows, cols = multi_indices(n, k + 1), multi_indices(n, k)
        m = np.zeros((len(rows), len(cols)), dtype=complex)
        for a, Kx in enumerate(rows):
            for pos, j in enumerate(Kx):
                m[a, cols.index(Kx[:pos] + Kx[pos + 1 :])] += (-1) ** pos * 2j * np.pi * xi[j]
        d[k] = m
        s = np.zeros((len(cols), len(rows)), dtype=complex)
        for (I, Kx, i), a in _s_coeffs(n)[k].items():
            s[cols.index(I), rows.index(Kx)] += a * K_hat[i]
        S[k] = s
    return d, S


# -- grids and forms --------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Vertex grid with P cells per axis on [-L, L]^n."""

    n: int
    L: float
    P: int

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.P

    @property
    def axis(self):
        return -self.L + self.h * np.arange(self.P + 1)

    @property
    def shape(self):
        return (self.P + 1,) * self.n

    @property
    def points(self):
        return np.stack(np.meshgrid(*([self.axis] * self.n), indexing="ij"), axis=-1)

    def inner_mask(self, half_width: float):
        return np.all(np.abs(self.points) <= half_width + 1e-12, axis=-1)


@dataclass
class GridForm:
    """k-form sampled on a grid: components[I] has the grid shape."""

    k: int
    grid: Grid
    components: dict

    def __sub__(self, other):
        return GridForm(self.k, self.grid, {I: self.components[I] - other.components[I] for I in self.components})

    def __add__(self, other):
        return GridForm(self.k, self.grid, {I: self.components[I] + other.components[I] for I in self.components})

    def sup_norm(self, half_width: float | None = None) -> float:
        mask = None if half_width is None else self.grid.inner_mask(half_width)
        vals = [np.abs(c if mask is None else c[mask]).max(initial=0.0) for c in self.components.values()]
        return float(max(vals, default=0.0))

    def l2_norm(self) -> float:
        h = self.grid.h
        return float(math.sqrt(sum(np.sum(np.abs(c) ** 2) for c in self.components.values()) * h**self.grid.n))

    def partials(self):
        """4th-order central differences (2nd order at the two outer layers)."""
        h = self.grid.h
        out = {}
        for I, c in self.components.items():
            for j in range(self.grid.n):
                out[(I, j)] = _fd4(c, j, h)
        return out

    def d(self) -> "GridForm":
        n = self.grid.n
        return GridForm(self.k + 1, self.grid, exterior_derivative(self.partials(), self.k, n))

    @classmethod
    def zeros(cls, k, grid):
        return cls(k, grid, {I: np.zeros(grid.shape) for I in multi_indices(grid.n, k)})


def _fd4(a, axis, h):
    g = np.gradient(a, h, axis=axis, edge_order=2)
    sl = [slice(None)] * a.ndim

    def s(lo, hi):
        out = list(sl)
        out[axis] = slice(lo, hi if hi != 0 else None)
        return tuple(out)

    if a.shape[axis] >= 5:
        inner = (-a[s(4, 0)] + 8 * a[s(3, -1)] - 8 * a[s(1, -3)] + a[s(0, -4)]) / (12 * h)
        g[s(2, -2)] = inner
    return g


@dataclass(frozen=True)
class BumpTerm:
    amplitude: float
    center: tuple
    radius: float
    # optional trig factor cos(2 pi f.x + phase)
    freq: tuple | None = None
    phase: float = 0.0

    def value(self, x):
        d = x - np.asarray(self.center)
        s = np.sum(d * d, axis=-1) / self.radius**2
        v = self.amplitude * bump(s)
        if self.freq is not None:
            v = v * np.cos(TWO_PI * (x @ np.asarray(self.freq, dtype=float)) + self.phase)
        return v

    def partial(self, x, j):
        d = x - np.asarray(self.center)
        s = np.sum(d * d, axis=-1) / self.radius**2
        db = self.amplitude * bump_derivative(s) * 2.0 * d[..., j] / self.radius**2
        if self.freq is None:
            return db
        f = np.asarray(self.freq, dtype=float)
        arg = TWO_PI * (x @ f) + self.phase
        return db * np.cos(arg) - self.amplitude * bump(s) * TWO_PI * f[j] * np.sin(arg)


@dataclass(frozen=True)
class BumpForm:
    """Closed-form compactly supported k-form: components are sums of bump terms."""

    n: int
    k: int
    terms: dict  # I -> tuple of BumpTerm

    def support_radius(self) -> float:
        return max(
            (np.linalg.norm(t.center, ord=np.inf) + t.radius for ts in self.terms.values() for t in ts),
            default=0.0,
        )

    def component(self, I, x):
        return sum((t.value(x) for t in self.terms.get(I, ())), np.zeros(x.shape[:-1]))

    def partial(self, I, j, x):
        return sum((t.partial(x, j) for t in self.terms.get(I, ())), np.zeros(x.shape[:-1]))

    def sample(self, grid: Grid) -> GridForm:
        x = grid.points
        return GridForm(self.k, grid, {I: self.component(I, x) for I in multi_indices(self.n, self.k)})

    def sample_partials(self, grid: Grid):
        x = grid.points
        return {(I, j): self.partial(I, j, x) for I in multi_indices(self.n, self.k) for j in range(self.n)}

    def sample_d(self, grid: Grid) -> GridForm:
        return GridForm(self.k + 1, grid, exterior_derivative(self.sample_partials(grid), self.k, self.n))

    def scaled(self, a: float) -> "BumpForm":
        return BumpForm(
            self.n,
            self.k,
            {I: tuple(BumpTerm(a * t.amplitude, t.center, t.radius, t.freq, t.phase) for t in ts) for I, ts in self.terms.items()},
        )


def bump_battery(n: int, k: int, count: int = 5) -> list[BumpForm]:
    """Deterministic battery of C-infinity bump k-forms supported in [-0.9, 0.9]^n."""
    rng = np.random.default_rng(1000 * n + k)
    out = []
    idx = multi_indices(n, k)
    for b in range(count):
        terms = {}
        for I in idx:
            radius = 0.45 + 0.25 * rng.random()
            center = tuple(rng.uniform(-1, 1, n) * (0.88 - radius) * 0.8)
            terms[I] = (BumpTerm(float(rng.uniform(0.5, 1.0) * rng.choice([-1, 1])), center, float(radius)),)
        out.append(BumpForm(n, k, terms))
    # the first form is a centred bump on every component
    out[0] = BumpForm(n, k, {I: (BumpTerm(1.0, tuple([0.0] * n), 0.8),) for I in idx})
    return out


def trig_bump_forms(n: int, k: int, count: int, seed: int = 7) -> list[BumpForm]:
    """Random bump x cosine forms for norm probes."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        terms = {}
        for I in multi_indices(n, k):
            terms[I] = (
                BumpTerm(
                    float(rng.normal()),
                    tuple(rng.uniform(-0.1, 0.1, n)),
                    0.7,
                    tuple(int(v) for v in rng.integers(-2, 3, n)),
                    float(rng.uniform(0, TWO_PI)),
                ),
            )
        out.append(BumpForm(n, k, terms))
    return out


# -- quadrature for S -------------------------------------------------------------


def _radial_cutoff(t):
    """1 on [0, 1/2], 0 on [1, inf), smooth in between."""
    return smooth_step(2.0 * (1.0 - np.asarray(t, dtype=float)))


def _direction_rule(n: int, n_angular: int):
    """Directions theta and weights on S^{n-1} (weights sum to |S^{n-1}|)."""
    if n == 2:
        t = TWO_PI * np.arange(n_angular) / n_angular
        return np.stack([np.cos(t), np.sin(t)], axis=-1), np.full(n_angular, TWO_PI / n_angular)
    if n == 3:
        nz = max(4, n_angular // 2)
        zc, zw = np.polynomial.legendre.leggauss(nz)
        phi = TWO_PI * np.arange(n_angular) / n_angular
        Z, PH = np.meshgrid(zc, phi, indexing="ij")
        W = np.repeat(zw[:, None], n_angular, axis=1) * (TWO_PI / n_angular)
        s = np.sqrt(1 - Z**2)
        dirs = np.stack([s * np.cos(PH), s * np.sin(PH), Z], axis=-1).reshape(-1, 3)
        return dirs, W.ravel()
    raise NotImplementedError("polar quadrature is implemented for n = 2 and n = 3")


@dataclass
class SQuadrature:
    """Discrete kernels W_i approximating convolution with K_i = d_i E on a grid."""

    grid: Grid
    R_cells: float = 4.0
    n_radial: int = 16
    n_angular: int = 32
    spline_order: int = 3
    kernels: list = field(init=False, repr=False)

    def __post_init__(self):
        self.kernels = [self._kernel(i) for i in range(self.grid.n)]

    @property
    def R(self) -> float:
        return self.R_cells * self.grid.h

    def _kernel(self, i: int) -> np.ndarray:
        g = self.grid
        n, h, P = g.n, g.h, g.P
        c = sphere_constant(n)
        off = h * np.arange(-P, P + 1)
        U = np.stack(np.meshgrid(*([off] * n), indexing="ij"), axis=-1)
        r = np.linalg.norm(U, axis=-1)
        rs = np.where(r == 0, 1.0, r)
        W = (1.0 - _radial_cutoff(r / self.R)) * c * U[..., i] / rs**n * h**n
        W[(P,) * n] = 0.0
        W += self._near_stencil(i, P)
        return W

    def _near_stencil(self, i: int, P: int) -> np.ndarray:
        """Weights w_q with  sum_q f(x - q h) w_q = int chi K_i(u) If(x - u) du."""
        g = self.grid
        n, h = g.n, g.h
        Q = int(math.ceil(self.R_cells)) + 24
        size = 2 * Q + 1
        delta = np.zeros((size,) * n)
        delta[(Q,) * n] = 1.0
        gr, gw = np.polynomial.legendre.leggauss(self.n_radial)
        rr = 0.5 * (gr + 1.0) * self.R
        rw = 0.5 * gw * self.R * _radial_cutoff(rr / self.R)
        dirs, dw = _direction_rule(n, self.n_angular)
        c = sphere_constant(n)
        # nodes u = r theta; weight c theta_i chi(r/R) dr dtheta (r^{n-1} cancels |u|^{1-n})
        nodes = (rr[:, None, None] * dirs[None]).reshape(-1, n)
        wts = (rw[:, None] * dw[None] * c * dirs[None, :, i]).ravel()
        from scipy.ndimage import spline_filter

        coef = spline_filter(delta, order=self.spline_order, mode="constant")
        stencil = np.zeros((size,) * n)
        qs = np.stack(np.meshgrid(*([np.arange(-Q, Q + 1)] * n), indexing="ij"), axis=-1).reshape(-1, n)
        for u, w in zip(nodes, wts):
            # interpolant of the delta at q - u/h sits at patch index Q + q - u/h
            coords = (Q + qs - u / h).T
            vals = map_coordinates(coef, coords, order=self.spline_order, mode="constant", prefilter=False)
            stencil += w * vals.reshape((size,) * n)
        out = np.zeros((2 * P + 1,) * n)
        if Q <= P:
            sl = tuple(slice(P - Q, P + Q + 1) for _ in range(n))
            out[sl] = stencil
        else:
            sl = tuple(slice(Q - P, Q + P + 1) for _ in range(n))
            out = stencil[sl].copy()
        return out

    def convolve(self, i: int, f: np.ndarray) -> np.ndarray:
        return fftconvolve(f, self.kernels[i], mode="same")


_QUAD_CACHE: dict = {}


def quadrature_for(grid: Grid, R_cells: float = 4.0, n_radial: int = 16, n_angular: int = 32) -> SQuadrature:
    key = (grid, R_cells, n_radial, n_angular)
    if key not in _QUAD_CACHE:
        if len(_QUAD_CACHE) > 8:
            _QUAD_CACHE.clear()
        _QUAD_CACHE[key] = SQuadrature(grid, R_cells, n_radial, n_angular)
    return _QUAD_CACHE[key]


def _apply_S_components(k: int, comps: dict, quad: SQuadrature) -> dict:
    n = quad.grid.n
    out = {I: np.zeros(quad.grid.shape) for I in multi_indices(n, k)}
    cache = {}
    for (I, K, i), a in _s_coeffs(n)[k].items():
        if K not in comps:
            continue
        key = (K, i)
        if key not in cache:
            cache[key] = quad.convolve(i, comps[K])
        out[I] = out[I] + a * cache[key]
    return out


def apply_S(k: int, phi, quad: SQuadrature | Grid) -> GridForm:
    """S_k phi on the quadrature grid; phi is a (k+1)-form (closed form or grid samples)."""
    quad = quad if isinstance(quad, SQuadrature) else quadrature_for(quad)
    n = quad.grid.n
    if not 0 <= k <= n - 1:
        raise ValueError(f"S_k needs 0 <= k <= {n - 1}")
    if isinstance(phi, BumpForm):
        if phi.support_radius() >= quad.grid.L:
            raise ValueError("form support must lie inside the quadrature box")
        phi = phi.sample(quad.grid)
    if phi.k != k + 1:
        raise ValueError(f"S_{k} acts on {k + 1}-forms, got a {phi.k}-form")
    return GridForm(k, quad.grid, _apply_S_components(k, phi.components, quad))


def apply_dS(k: int, phi, quad: SQuadrature) -> GridForm:
    """d_k S_{k-1} phi for a k-form phi, differentiating under the convolution."""
    n = quad.grid.n
    if isinstance(phi, BumpForm):
        parts = phi.sample_partials(quad.grid)
    else:
        parts = phi.partials()
    partials = {}
    for j in range(n):
        comps = {I: parts[(I, j)] for I in multi_indices(n, k)}
        Sj = _apply_S_components(k - 1, comps, quad)
        for I in multi_indices(n, k - 1):
            partials[(I, j)] = Sj[I]
    return GridForm(k, quad.grid, exterior_derivative(partials, k - 1, n))


def apply_Sd(k: int, phi, quad: SQuadrature) -> GridForm:
    """S_k d_k phi."""
    dphi = phi.sample_d(quad.grid) if isinstance(phi, BumpForm) else phi.d()
    return apply_S(k, dphi, quad)


def homotopy_residual(phi: BumpForm, quad: SQuadrature) -> float:
    """sup |(d S + S d) phi - phi| on the grid."""
    k, n = phi.k, phi.n
    total = GridForm.zeros(k, quad.grid)
    if k >= 1:
        total = total + apply_dS(k, phi, quad)
    if k <= n - 1:
        total = total + apply_Sd(k, phi, quad)
    return (total - phi.sample(quad.grid)).sup_norm()


@dataclass(frozen=True)
class ResidualCurve:
    levels: tuple  # (level, h, residual)

    @property
    def final(self) -> float:
        return self.levels[-1][2]

    def monotone(self, slack: float = 0.10) -> bool:
        res = [r for _, _, r in self.levels]
        return all(b <= a * (1 + slack) for a, b in zip(res, res[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "h", "residual"])
        for lvl, h, r in self.levels:
            w.writerow([lvl, format(h, ".17g"), format(r, ".17g")])
        return buf.getvalue()


def check_homotopy(k: int, forms, levels=(32, 64, 128, 256), L: float = 1.0, **quad_kw) -> ResidualCurve:
    """Sup-norm homotopy residual over a battery, per refinement level (P cells on [-L, L]^n)."""
    rows = []
    for lvl, P in enumerate(levels):
        if not forms:
            rows.append((lvl, 2 * L / P, 0.0))
            continue
        grid = Grid(forms[0].n, L, P)
        quad = quadrature_for(grid, **quad_kw)
        rows.append((lvl, grid.h, max(homotopy_residual(f, quad) for f in forms)))
    return ResidualCurve(tuple(rows))


@dataclass(frozen=True)
class AlgebraReport:
    residuals: dict  # name -> sup norm on the inner box

    def max(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def passed(self, tol: float = 1e-2) -> bool:
        return self.max() <= tol


def check_algebra(k: int, forms, P: int = 256, L: float = 4.0, inner: float = 1.0) -> AlgebraReport:
    """Residuals of S S = 0, (dS)^2 = dS, (Sd)^2 = Sd and dS Sd = 0 on k-forms.

    Inner results live on the large box [-L, L]^n so that their slowly
    decaying tails enter the outer convolutions; residuals are measured on
    [-inner, inner]^n.
    """
    res: dict = {}
    if not forms:
        return AlgebraReport({})
    n = forms[0].n
    quad = quadrature_for(Grid(n, L, P))
    for phi in forms:
        parts = {}
        if k >= 2:
            s1 = apply_S(k - 1, phi, quad)
            parts["SS"] = apply_S(k - 2, s1, quad).sup_norm(inner)
        if k >= 1:
            ds = apply_dS(k, phi, quad)
            parts["dS^2-dS"] = (apply_dS(k, ds, quad) - ds).sup_norm(inner)
        if k <= n - 1:
            sd = apply_Sd(k, phi, quad)
            parts["Sd^2-Sd"] = (apply_Sd(k, sd, quad) - sd).sup_norm(inner)
            if k >= 1:
                parts["dS.Sd"] = apply_dS(k, sd, quad).sup_norm(inner)
        for name, v in parts.items():
            res[name] = max(res.get(name, 0.0), v)
    return AlgebraReport(res)


def weak_delta_pairing(psi: BumpForm, n_radial: int = 64, n_angular: int = 64) -> tuple[float, float]:
    """(int sigma ^ d psi, psi(0)) for a 0-form psi; the two agree up to (-1)^n.

    In polar coordinates the integrand of sigma ^ d psi is
    (-1)^{n-1} c theta . grad psi(r theta), with no singular factor left.
    """
    n = psi.n
    if psi.k != 0:
        raise ValueError("pairing is defined for 0-forms")
    Rmax = psi.support_radius() * math.sqrt(n) + 1e-9
    gr, gw = np.polynomial.legendre.leggauss(n_radial)
    rr = 0.5 * (gr + 1) * Rmax
    rw = 0.5 * gw * Rmax
    dirs, dw = _direction_rule(n, n_angular)
    pts = rr[:, None, None] * dirs[None]
    grad = np.stack([psi.partial((), j, pts) for j in range(n)], axis=-1)
    integrand = np.sum(grad * dirs[None], axis=-1)
    val = (-1) ** (n - 1) * sphere_constant(n) * np.sum(integrand * rw[:, None] * dw[None])
    return float(val), float(psi.component((), np.zeros((1, n)))[0])


def ds_norm_ratios(forms, levels=(32, 64, 128), L: float = 1.5) -> list[float]:
    """max ||d S phi||_2 / ||phi||_2 over the forms, per resolution."""
    out = []
    for P in levels:
        quad = quadrature_for(Grid(forms[0].n, L, P))
        out.append(max(apply_dS(f.k, f, quad).l2_norm() / f.sample(quad.grid).l2_norm() for f in forms))
    return out


# -- auxiliary transfer operators -------------------------------------------------


def wedge_one_form(a: dict, eta: dict, n: int, k: int) -> dict:
    """(a ^ eta) for a 1-form a = {j: a_j} and a k-form eta = {I: eta_I}."""
    out = {K: 0.0 for K in multi_indices(n, k + 1)}
    for j, aj in a.items():
        for I, e in eta.items():
            if j in I:
                continue
            K = tuple(sorted((j,) + I))
            out[K] = out[K] + wedge_sign((j,), I) * aj * e
    return out


def apply_N(system, k: int, phi, x):
    """N_k phi(x) = sum_omega d g_omega ^ psi_omega^* phi at points x.

    ``phi`` is a callable returning component values, shape (..., C(n, k)),
    at lifted points.  Works for torus systems and Euclidean branch systems.
    """
    from .dynamics import EuclideanBranchSystem
    from .forms import pullback_matrix

    x = np.asarray(x, dtype=float)
    n = system.n
    idx = multi_indices(n, k)
    total = {K: np.zeros(x.shape[:-1], dtype=complex) for K in multi_indices(n, k + 1)}
    if isinstance(system, EuclideanBranchSystem):
        data = []
        for b in system.branches:
            inside = b.contains(x)
            y = b.psi(x)
            data.append((y, b.dpsi(x), np.where(inside[..., None], b.dweight(x), 0.0)))
    else:
        y, J, _ = system.branch_data(x)
        grad = system.model.weight_gradient(y)
        dg = np.einsum("b...ji,b...j->b...i", J, grad)
        data = [(y[i], J[i], dg[i]) for i in range(len(y))]
    for y, J, dg in data:
        pulled = np.einsum("...il,...l->...i", pullback_matrix(J, k), phi(y))
        eta = {I: pulled[..., a] for a, I in enumerate(idx)}
        a = {j: dg[..., j] for j in range(n)}
        w = wedge_one_form(a, eta, n, k)
        for K in total:
            total[K] = total[K] + w[K]
    return np.stack([total[K] for K in multi_indices(n, k + 1)], axis=-1)
