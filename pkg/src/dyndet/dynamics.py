"""Expanding torus maps, their inverse branches, and contracting branch systems.

A :class:`TorusMapModel` is f(x) = A x + eps p(x) mod 1 with p a real
trigonometric polynomial vector field.  Its lift F(y) = A y + eps p(y) is a
diffeomorphism of R^n, with inverse G, and the inverse branches of f are
psi_j(x) = G(x + j) for j running over coset representatives of Z^n / A Z^n.

:func:`chart_system` recasts the same dynamics as a finite system of
compactly supported branches on R^n (disjoint chart copies glued by a
smooth partition of unity), the setting needed by the kneading operators.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sympy import Matrix
from sympy.matrices.normalforms import hermite_normal_form

from .smooth import bump, bump_derivative, smooth_step, smooth_step_derivative

TWO_PI = 2.0 * np.pi


class ModelError(ValueError):
    """The map data do not define a uniformly expanding local diffeomorphism."""


class BranchEvaluationError(RuntimeError):
    """Newton iteration for an inverse branch did not converge."""


@dataclass(frozen=True)
class TrigTerm:
    """One term of the perturbation: p_component += s sin(2 pi k.x) + c cos(2 pi k.x).

    ``component`` is 0-based here; the JSON form is 1-based.
    """

    component: int
    freq: tuple[int, ...]
    coeff_sin: float = 0.0
    coeff_cos: float = 0.0


@dataclass(frozen=True)
class TrigWeight:
    """Complex trigonometric polynomial g(y) = sum_k c_k exp(2 pi i k.y)."""

    modes: tuple[tuple[tuple[int, ...], complex], ...]

    @classmethod
    def constant(cls, value: complex, n: int = 2) -> "TrigWeight":
        return cls(((tuple([0] * n), complex(value)),))

    def _phases(self, y):
        freqs = np.array([f for f, _ in self.modes], dtype=float)
        coeffs = np.array([c for _, c in self.modes], dtype=complex)
        return freqs, coeffs, np.exp(1j * TWO_PI * (y @ freqs.T))

    def __call__(self, y):
        _, coeffs, ph = self._phases(np.asarray(y, dtype=float))
        return ph @ coeffs

    def gradient(self, y):
        freqs, coeffs, ph = self._phases(np.asarray(y, dtype=float))
        return (ph * coeffs) @ (1j * TWO_PI * freqs)

    def to_dict(self):
        return {"modes": [{"freq": list(f), "re": c.real, "im": c.imag} for f, c in self.modes]}


@dataclass(frozen=True)
class TorusMapModel:
    """f(x) = A x + eps p(x) mod 1 on T^n together with a weight g.

    ``weight`` is either the string ``"acip"`` (g = 1/|det Df|) or a
    :class:`TrigWeight`.  ``r`` is the smoothness order entering radius
    bounds (``inf`` for trigonometric data).
    """

    A: tuple[tuple[int, ...], ...]
    epsilon: float = 0.0
    perturbation: tuple[TrigTerm, ...] = ()
    weight: object = "acip"
    r: float = math.inf

    def __post_init__(self):
        A = np.array(self.A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ModelError("A must be a square integer matrix")
        if not np.issubdtype(A.dtype, np.integer):
            raise ModelError("A must have integer entries")
        if abs(round(np.linalg.det(A))) < 2:
            raise ModelError("expansion matrix must have |det A| >= 2")
        for t in self.perturbation:
            if not 0 <= t.component < A.shape[0] or len(t.freq) != A.shape[0]:
                raise ModelError(f"bad perturbation term {t}")

    # -- basic data ---------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.A)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.A, dtype=float)

    @property
    def degree(self) -> int:
        return int(abs(round(np.linalg.det(np.array(self.A)))))

    def _terms(self):
        comp = np.array([t.component for t in self.perturbation], dtype=int)
        freq = np.array([t.freq for t in self.perturbation], dtype=float).reshape(-1, self.n)
        s = np.array([t.coeff_sin for t in self.perturbation], dtype=float)
        c = np.array([t.coeff_cos for t in self.perturbation], dtype=float)
        return comp, freq, s, c

    def lift(self, y):
        """F(y) = A y + eps p(y) on R^n."""
        y = np.asarray(y, dtype=float)
        out = y @ self.matrix.T
        if self.epsilon and self.perturbation:
            comp, freq, s, c = self._terms()
            arg = TWO_PI * (y @ freq.T)
            vals = s * np.sin(arg) + c * np.cos(arg)
            for i in range(self.n):
                out[..., i] += self.epsilon * vals[..., comp == i].sum(axis=-1)
        return out

    def __call__(self, x):
        """f(x) = F(x) mod 1."""
        return np.mod(self.lift(x), 1.0)

    def jacobian(self, y):
        """Df(y) = A + eps Dp(y), shape (..., n, n)."""
        y = np.asarray(y, dtype=float)
        out = np.broadcast_to(self.matrix, y.shape[:-1] + (self.n, self.n)).copy()
        if self.epsilon and self.perturbation:
            comp, freq, s, c = self._terms()
            arg = TWO_PI * (y @ freq.T)
            dvals = TWO_PI * (s * np.cos(arg) - c * np.sin(arg))
            for i in range(self.n):
                m = comp == i
                out[..., i, :] += self.epsilon * dvals[..., m] @ freq[m]
        return out

    def jacobian_derivative(self, y):
        """d/dy_l of Df(y)_{ij}, shape (..., n, n, n) indexed [i, j, l]."""
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1] + (self.n, self.n, self.n))
        if self.epsilon and self.perturbation:
            comp, freq, s, c = self._terms()
            arg = TWO_PI * (y @ freq.T)
            ddvals = -(TWO_PI**2) * (s * np.sin(arg) + c * np.cos(arg))
            outer = freq[:, :, None] * freq[:, None, :]
            for i in range(self.n):
                m = comp == i
                out[..., i, :, :] += self.epsilon * np.einsum("...t,tjl->...jl", ddvals[..., m], outer[m])
        return out

    def weight_at(self, y):
        """g(y) as a complex array."""
        if self.weight == "acip":
            return (1.0 / np.abs(np.linalg.det(self.jacobian(y)))).astype(complex)
        return self.weight(y)

    def weight_gradient(self, y):
        """Gradient of g, shape (..., n); for the acip weight via Jacobi's formula."""
        if self.weight == "acip":
            Df = self.jacobian(y)
            dDf = self.jacobian_derivative(y)
            inv = np.linalg.inv(Df)
            # d log|det Df| / dy_l = tr(Df^{-1} d_l Df)
            dlog = np.einsum("...ji,...ijl->...l", inv, dDf)
            g = 1.0 / np.abs(np.linalg.det(Df))
            return (-g[..., None] * dlog).astype(complex)
        return self.weight.gradient(y)

    def with_weight(self, weight) -> "TorusMapModel":
        return TorusMapModel(self.A, self.epsilon, self.perturbation, weight, self.r)

    # -- serialization --------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "TorusMapModel":
        A = tuple(tuple(int(v) for v in row) for row in d["A"])
        n = int(d.get("n", len(A)))
        if n != len(A):
            raise ModelError("n does not match A")
        terms = tuple(
            TrigTerm(
                component=int(t["component"]) - 1,
                freq=tuple(int(v) for v in t["freq"]),
                coeff_sin=float(t.get("coeff_sin", 0.0)),
                coeff_cos=float(t.get("coeff_cos", 0.0)),
            )
            for t in d.get("perturbation", [])
        )
        w = d.get("weight", "acip")
        if w != "acip":
            if not isinstance(w, dict) or "modes" not in w:
                raise ModelError("weight must be 'acip' or {'modes': [...]}")
            w = TrigWeight(
                tuple(
                    (tuple(int(v) for v in m["freq"]), complex(float(m.get("re", 0.0)), float(m.get("im", 0.0))))
                    for m in w["modes"]
                )
            )
        r = d.get("r", "inf")
        r = math.inf if r in ("inf", None) else float(r)
        return cls(A, float(d.get("epsilon", 0.0)), terms, w, r)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "A": [list(row) for row in self.A],
            "epsilon": self.epsilon,
            "perturbation": [
                {"component": t.component + 1, "freq": list(t.freq), "coeff_sin": t.coeff_sin, "coeff_cos": t.coeff_cos}
                for t in self.perturbation
            ],
            "weight": "acip" if self.weight == "acip" else self.weight.to_dict(),
            "r": "inf" if math.isinf(self.r) else self.r,
        }

    @classmethod
    def from_json(cls, text: str) -> "TorusMapModel":
        return cls.from_dict(json.loads(text))

    def fingerprint(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def linear_model(A=((2, 0), (0, 2)), weight=None) -> TorusMapModel:
    """Unperturbed model; ``weight=None`` means the constant 1/|det A|."""
    A = tuple(tuple(row) for row in A)
    if weight is None:
        weight = TrigWeight.constant(1.0 / abs(round(np.linalg.det(np.array(A)))), len(A))
    elif not isinstance(weight, (str, TrigWeight)):
        weight = TrigWeight.constant(weight, len(A))
    return TorusMapModel(A, 0.0, (), weight)


def perturbed_model(epsilon: float = 0.05, weight="acip") -> TorusMapModel:
    """A = 2 I, p = (sin 2 pi x_2, 0)."""
    return TorusMapModel(((2, 0), (0, 2)), epsilon, (TrigTerm(0, (0, 1), 1.0),), weight)


def coupled_model(epsilon: float = 0.05, weight="acip") -> TorusMapModel:
    """A = 2 I, p = (sin 2 pi x_2, sin 2 pi x_1): non-constant Jacobian determinant."""
    terms = (TrigTerm(0, (0, 1), 1.0), TrigTerm(1, (1, 0), 1.0))
    return TorusMapModel(((2, 0), (0, 2)), epsilon, terms, weight)


# -- lattice utilities ------------------------------------------------------------


def lattice_representatives(B) -> np.ndarray:
    """Representatives of Z^n / B Z^n for a nonsingular integer matrix B.

    Uses the (upper triangular) Hermite normal form H of B: the boxes
    0 <= k_i < H_ii enumerate each class exactly once.
    """
    B = np.asarray(B, dtype=np.int64)
    H = np.array(hermite_normal_form(Matrix(B.tolist())).tolist(), dtype=np.int64)
    if H.shape != B.shape:
        raise ModelError("matrix is singular")
    diag = [int(H[i, i]) for i in range(H.shape[0])]
    grids = np.meshgrid(*[np.arange(d) for d in diag], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def lift_inverse(model: TorusMapModel, target, tol: float = 1e-13, max_iter: int = 50):
    """Solve F(y) = target by Newton's method seeded with the affine inverse."""
    target = np.asarray(target, dtype=float)
    Ainv = np.linalg.inv(model.matrix)
    y = target @ Ainv.T
    if not (model.epsilon and model.perturbation):
        return y
    for _ in range(max_iter):
        res = model.lift(y) - target
        if np.max(np.abs(res), initial=0.0) <= tol:
            return y
        y = y - np.linalg.solve(model.jacobian(y), res[..., None])[..., 0]
    res = model.lift(y) - target
    if np.max(np.abs(res), initial=0.0) > tol:
        raise BranchEvaluationError(f"inverse branch did not converge (residual {np.abs(res).max():.3e})")
    return y


# -- torus branches ---------------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    """Inverse branch psi_j(x) = G(x + j) of a torus model."""

    model: TorusMapModel
    offset: tuple[int, ...]
    tol: float = 1e-13

    def lift(self, x):
        """psi_j(x) as a point of R^n (not reduced mod 1)."""
        return lift_inverse(self.model, np.asarray(x, dtype=float) + np.array(self.offset, dtype=float), self.tol)

    def __call__(self, x):
        return np.mod(self.lift(x), 1.0)

    def jacobian(self, x):
        """D psi_j(x) = (Df(psi_j(x)))^{-1}."""
        Df = self.model.jacobian(self.lift(x))
        if np.any(np.abs(np.linalg.det(Df)) < 1e-14):
            raise ModelError("Df is singular")
        return np.linalg.inv(Df)

    def weight(self, x):
        """g_omega(x) = g(psi_omega(x))."""
        return self.model.weight_at(self.lift(x))


class TorusBranchSystem:
    """The |det A| global inverse branches of a torus model (K = K' = T^n)."""

    def __init__(self, model: TorusMapModel, tol: float = 1e-13):
        self.model = model
        self.tol = tol
        self.offsets = lattice_representatives(np.array(model.A))
        self.branches = tuple(Branch(model, tuple(int(v) for v in j), tol) for j in self.offsets)

    @property
    def n(self) -> int:
        return self.model.n

    def __len__(self):
        return len(self.branches)

    def preimages(self, x):
        """Lifted preimages G(x + j), shape (|Omega|, ..., n)."""
        x = np.asarray(x, dtype=float)
        shape = (len(self.offsets),) + (1,) * (x.ndim - 1) + (self.n,)
        target = x[None] + self.offsets.reshape(shape)
        return lift_inverse(self.model, target, self.tol)

    def branch_data(self, x):
        """(preimages, branch Jacobians, weights) at the points x."""
        y = self.preimages(x)
        return y, np.linalg.inv(self.model.jacobian(y)), self.model.weight_at(y)

    def validate(self, resolution: int = 16) -> None:
        """Reject models where Newton fails or Df degenerates on a grid."""
        x = torus_grid(self.n, resolution)
        try:
            y = self.preimages(x)
        except BranchEvaluationError as exc:
            raise ModelError(f"Newton basin check failed: {exc}") from exc
        if np.any(np.abs(np.linalg.det(self.model.jacobian(y))) < 1e-12):
            raise ModelError("Df is singular on the validation grid")
        theta_estimate(self, resolution)


def torus_grid(n: int, resolution: int) -> np.ndarray:
    t = np.arange(resolution) / resolution
    return np.stack(np.meshgrid(*([t] * n), indexing="ij"), axis=-1).reshape(-1, n)


@dataclass(frozen=True)
class ComposedWord:
    """psi_w = psi_{w_m} o ... o psi_{w_1} for a word of branch indices."""

    system: TorusBranchSystem
    word: tuple[int, ...]

    def lift_with_jacobian(self, x):
        y = np.asarray(x, dtype=float)
        J = np.broadcast_to(np.eye(self.system.n), y.shape[:-1] + (self.system.n, self.system.n)).copy()
        for w in self.word:
            b = self.system.branches[w]
            y = b.lift(y)
            J = np.linalg.inv(self.system.model.jacobian(y)) @ J
        return y, J

    def __call__(self, x):
        return np.mod(self.lift_with_jacobian(x)[0], 1.0)

    def jacobian(self, x):
        return self.lift_with_jacobian(x)[1]


def compose_word(system, word: Sequence[int]):
    if len(word) < 1:
        raise ValueError("word length must be >= 1")
    if isinstance(system, TorusBranchSystem):
        return ComposedWord(system, tuple(int(w) for w in word))
    return EuclideanWord(system, tuple(int(w) for w in word))


def theta_estimate(system, resolution: int = 32) -> float:
    """max ||D psi_omega(x)|| over a grid of x and all branches."""
    if resolution < 8:
        raise ValueError("resolution must be >= 8 per axis")
    if isinstance(system, TorusBranchSystem):
        x = torus_grid(system.n, resolution)
        _, J, _ = system.branch_data(x)
        theta = float(np.linalg.norm(J, ord=2, axis=(-2, -1)).max())
    else:
        theta = 0.0
        for b in system.branches:
            x = box_grid(b.domain, resolution)
            theta = max(theta, float(np.linalg.norm(b.dpsi(x), ord=2, axis=(-2, -1)).max()))
    if theta >= 1.0:
        raise ModelError(f"not expanding: theta estimate {theta:.6f} >= 1")
    return theta


# -- branch systems on R^n --------------------------------------------------------


@dataclass(frozen=True)
class LocalBranch:
    """Contracting branch psi on a box of R^n with weight g supported inside it.

    All callables take points of shape (..., n); ``dweight`` returns the
    gradient of g with shape (..., n).
    """

    psi: Callable
    dpsi: Callable
    weight: Callable
    dweight: Callable
    domain: tuple[np.ndarray, np.ndarray]
    label: tuple = ()

    def contains(self, x, margin: float = 0.0):
        lo, hi = self.domain
        return np.all((x > lo - margin) & (x < hi + margin), axis=-1)


@dataclass
class EuclideanBranchSystem:
    """Finite family of local branches on R^n with compact box K."""

    branches: tuple[LocalBranch, ...]
    n: int
    successors: dict = field(default=None, repr=False)

    def __len__(self):
        return len(self.branches)

    def next_branches(self, i: int):
        """Branches that can follow branch i in a word (all, by default)."""
        if self.successors is None:
            return range(len(self.branches))
        return self.successors[i]


@dataclass(frozen=True)
class EuclideanWord:
    system: EuclideanBranchSystem
    word: tuple[int, ...]

    def lift_with_jacobian(self, x):
        y = np.asarray(x, dtype=float)
        J = np.broadcast_to(np.eye(self.system.n), y.shape[:-1] + (self.system.n, self.system.n)).copy()
        for w in self.word:
            b = self.system.branches[w]
            J = b.dpsi(y) @ J
            y = b.psi(y)
        return y, J

    def __call__(self, x):
        return self.lift_with_jacobian(x)[0]

    def jacobian(self, x):
        return self.lift_with_jacobian(x)[1]


def box_grid(domain, resolution: int) -> np.ndarray:
    lo, hi = (np.asarray(v, dtype=float) for v in domain)
    axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(resolution) + 0.5) / resolution for i in range(len(lo))]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


def affine_branch(L, p, center, radius, amplitude=1.0, label=()) -> LocalBranch:
    """psi(x) = L (x - p) + p with weight amplitude * bump(|x - center|^2 / radius^2)."""
    L = np.asarray(L, dtype=float)
    p = np.asarray(p, dtype=float)
    c = np.asarray(center, dtype=float)
    n = len(p)

    def psi(x):
        return (np.asarray(x) - p) @ L.T + p

    def dpsi(x):
        return np.broadcast_to(L, np.shape(x)[:-1] + (n, n)).copy()

    def weight(x):
        s = np.sum((np.asarray(x) - c) ** 2, axis=-1) / radius**2
        return amplitude * bump(s).astype(complex)

    def dweight(x):
        d = np.asarray(x) - c
        s = np.sum(d**2, axis=-1) / radius**2
        return (amplitude * (bump_derivative(s) * 2.0 / radius**2)[..., None] * d).astype(complex)

    return LocalBranch(psi, dpsi, weight, dweight, (c - radius, c + radius), label)


# -- chart compilation of a torus model ------------------------------------------


def _wrap(t):
    """Representative of t mod 1 in [-1/2, 1/2)."""
    return t - np.floor(t + 0.5)


@dataclass(frozen=True)
class ChartAtlas:
    """Partition of unity chi_c on T^n by products of periodic 1-D bumps.

    Chart c has torus centre s_c = c / pieces and is copied to the box of
    half-width ``outer`` around the R^n offset o_c = spacing * c.  chi_c is
    supported within ``half_width`` of s_c; the cutoff kappa_c equals 1 there
    and vanishes outside the chart box.
    """

    n: int = 2
    pieces: int = 2
    half_width: float = 0.3
    outer: float = 0.45
    spacing: float = 4.0

    def __post_init__(self):
        if not 1.0 / (2 * self.pieces) < self.half_width < self.outer < 0.5:
            raise ValueError("need 1/(2 pieces) < half_width < outer < 1/2")

    @property
    def charts(self):
        return list(itertools.product(range(self.pieces), repeat=self.n))

    def centre(self, c):
        return np.array(c, dtype=float) / self.pieces

    def offset(self, c):
        return self.spacing * np.array(c, dtype=float)

    def _profile(self, t):
        """1-D bumps b_i(t) for all pieces and their derivatives, shape (..., pieces)."""
        w = self.half_width
        centres = np.arange(self.pieces) / self.pieces
        d = _wrap(np.asarray(t)[..., None] - centres)
        s = (d / w) ** 2
        return bump(s), bump_derivative(s) * 2.0 * d / w**2

    def chi(self, c, a):
        """chi_c(a) and its gradient at torus points a (..., n)."""
        a = np.asarray(a, dtype=float)
        vals, grads = [], []
        for i in range(self.n):
            b, db = self._profile(a[..., i])
            tot, dtot = b.sum(-1), db.sum(-1)
            vals.append(b[..., c[i]] / tot)
            grads.append((db[..., c[i]] * tot - b[..., c[i]] * dtot) / tot**2)
        val = np.prod(vals, axis=0)
        grad = np.stack(
            [np.prod([grads[i] if i == l else vals[i] for i in range(self.n)], axis=0) for l in range(self.n)],
            axis=-1,
        )
        return val, grad

    def kappa(self, u):
        """Cutoff in chart coordinates u = x - o_c: 1 on |u|_inf <= half_width."""
        u = np.asarray(u, dtype=float)
        width = self.outer - self.half_width
        t = (self.outer - np.abs(u)) / width
        s, ds = smooth_step(t), smooth_step_derivative(t) * (-np.sign(u)) / width
        val = np.prod(s, axis=-1)
        grad = np.stack(
            [np.prod([ds[..., i] if i == l else s[..., i] for i in range(self.n)], axis=0) for l in range(self.n)],
            axis=-1,
        )
        return val, grad


def chart_system(model: TorusMapModel, atlas: ChartAtlas | None = None, probe: int = 21) -> EuclideanBranchSystem:
    """Compile a torus model into compactly supported branches on R^n.

    Branch (c', j, c) maps chart c' into chart c through psi_j, with weight
    kappa_{c'}(x) g(psi_j x) chi_c(psi_j x).  Its transfer operator has the
    same nonzero spectrum, sharp traces and flat traces as the torus one.
    """
    atlas = atlas or ChartAtlas(n=model.n)
    if atlas.n != model.n:
        raise ValueError("atlas dimension differs from model dimension")
    system = TorusBranchSystem(model)
    charts = atlas.charts
    branches, meta = [], []
    for cs in charts:
        s_src, o_src = atlas.centre(cs), atlas.offset(cs)
        dom = (o_src - atlas.outer, o_src + atlas.outer)
        probe_pts = box_grid(dom, probe)
        for j in system.offsets:
            jt = tuple(int(v) for v in j)
            for ct in charts:
                b = _chart_branch(model, atlas, cs, jt, ct)
                if np.abs(b.weight(probe_pts)).max() == 0.0:
                    continue
                branches.append(b)
                meta.append((charts.index(cs), charts.index(ct)))
    successors = {i: [k for k, (src, _) in enumerate(meta) if src == meta[i][1]] for i in range(len(meta))}
    return EuclideanBranchSystem(tuple(branches), model.n, successors)


def _chart_branch(model, atlas, cs, j, ct) -> LocalBranch:
    s_src, o_src = atlas.centre(cs), atlas.offset(cs)
    s_dst, o_dst = atlas.centre(ct), atlas.offset(ct)
    jv = np.array(j, dtype=float)

    def image(x):
        return lift_inverse(model, s_src + (np.asarray(x, dtype=float) - o_src) + jv)

    def psi(x):
        return o_dst + _wrap(image(x) - s_dst)

    def dpsi(x):
        return np.linalg.inv(model.jacobian(image(x)))

    def weight(x):
        y = image(x)
        chi, _ = atlas.chi(ct, y)
        kap, _ = atlas.kappa(np.asarray(x, dtype=float) - o_src)
        return kap * chi * model.weight_at(y)

    def dweight(x):
        x = np.asarray(x, dtype=float)
        y = image(x)
        Dpsi = np.linalg.inv(model.jacobian(y))
        chi, dchi = atlas.chi(ct, y)
        kap, dkap = atlas.kappa(x - o_src)
        g, dg = model.weight_at(y), model.weight_gradient(y)
        inner = dg * chi[..., None] + g[..., None] * dchi
        return dkap * (chi * g)[..., None] + kap[..., None] * np.einsum("...ji,...j->...i", Dpsi, inner)

    return LocalBranch(psi, dpsi, weight, dweight, (o_src - atlas.outer, o_src + atlas.outer), (cs, j, ct))
