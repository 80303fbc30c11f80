"""Fourier collocation of transfer operators on k-forms of the torus.

The operator is

    (M_k phi)(x) = sum_omega g_omega(x) psi_omega^* phi (x),

acting on forms whose components are trigonometric polynomials with modes
in [-N, N]^n.  Columns are obtained by sampling the image of each basis
form e_kappa dx_L on a grid with 2(2N+1) points per axis and truncating its
discrete Fourier transform.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dynamics import TorusBranchSystem, theta_estimate, torus_grid
from .forms import multi_indices, pullback_matrix

TWO_PI = 2.0 * np.pi
DEFAULT_MAX_DIM = 12000


def _fmt(v: float) -> str:
    return format(float(v) + 0.0, ".17g")


def mode_list(n: int, N: int) -> np.ndarray:
    """Modes kappa in [-N, N]^n, lexicographic."""
    return np.array(list(itertools.product(range(-N, N + 1), repeat=n)), dtype=np.int64)


@dataclass(frozen=True)
class FormField:
    """k-form on T^n with trigonometric-polynomial components.

    ``coeffs[c, i]`` multiplies exp(2 pi i kappa_i . x) dx_{I_c}, with
    kappa_i from :func:`mode_list` and I_c from :func:`multi_indices`.
    """

    k: int
    n: int
    N: int
    coeffs: np.ndarray

    @property
    def modes(self):
        return mode_list(self.n, self.N)

    def vector(self) -> np.ndarray:
        return self.coeffs.ravel()

    @classmethod
    def from_vector(cls, k, n, N, v):
        return cls(k, n, N, np.asarray(v, dtype=complex).reshape(math.comb(n, k), -1))

    def __call__(self, x):
        """Component values at points x, shape (..., n_components)."""
        x = np.asarray(x, dtype=float)
        e = np.exp(1j * TWO_PI * (x @ self.modes.T.astype(float)))
        return e @ self.coeffs.T

    @classmethod
    def random(cls, k, n, N, rng, decay: float = 1.0):
        """Random form with coefficients decaying like exp(-decay |kappa|_1)."""
        modes = mode_list(n, N)
        scale = np.exp(-decay * np.abs(modes).sum(axis=1))
        shape = (math.comb(n, k), len(modes))
        c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * scale
        return cls(k, n, N, c)


@dataclass(frozen=True)
class OperatorMatrix:
    matrix: np.ndarray
    k: int
    N: int
    n: int
    model_hash: str
    weight_kind: str = "signed"

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, form: FormField) -> FormField:
        return FormField.from_vector(self.k, self.n, self.N, self.matrix @ form.vector())


def _weights(system: TorusBranchSystem, y, J, g, kind):
    if kind == "signed":
        return g
    if kind == "abs":
        return np.abs(g).astype(complex)
    if callable(kind):
        return np.asarray(kind(y, J, g), dtype=complex)
    raise ValueError(f"unknown weight kind {kind!r}")


def assemble_transfer_matrix(
    system: TorusBranchSystem,
    k: int,
    N: int,
    weight="signed",
    max_dim: int = DEFAULT_MAX_DIM,
    batch: int = 128,
) -> OperatorMatrix:
    """Dense matrix of M_k on components with modes in [-N, N]^n.

    ``weight`` is ``"signed"`` (g), ``"abs"`` (|g|, the operator M_0^+) or a
    callable (y, Dpsi, g) -> weights at the lifted preimages y.
    """
    n = system.n
    if N < 4:
        raise ValueError("mode cutoff N must be >= 4")
    if not 0 <= k <= n:
        raise ValueError(f"form degree {k} outside 0..{n}")
    modes = mode_list(n, N)
    comps = multi_indices(n, k)
    nm, nc = len(modes), len(comps)
    dim = nm * nc
    if dim > max_dim:
        raise MemoryError(f"matrix dimension {dim} exceeds the cap {max_dim}")
    P = 2 * (2 * N + 1)
    x = torus_grid(n, P)
    y, J, g = system.branch_data(x)
    w = _weights(system, y, J, g, weight)
    pb = pullback_matrix(J, k)  # (branches, points, I, L)
    coef = w[..., None, None] * pb
    idx = tuple((modes % P).T)
    out = np.zeros((dim, dim), dtype=complex)
    modes_f = modes.astype(float)
    for start in range(0, nm, batch):
        kap = modes_f[start : start + batch]
        e = np.exp(1j * TWO_PI * np.einsum("bpn,mn->bpm", y, kap))  # (branches, points, batch)
        for b in range(nc):
            # samples of each output component for input component L = comps[b]
            samples = np.einsum("bpa,bpm->apm", coef[..., :, b], e)
            spec = np.fft.fftn(samples.reshape((nc,) + (P,) * n + (len(kap),)), axes=tuple(range(1, n + 1)))
            spec /= P**n
            for a in range(nc):
                block = spec[(a,) + idx]  # (nm, batch)
                out[a * nm : (a + 1) * nm, b * nm + start : b * nm + start + len(kap)] = block
    kind = weight if isinstance(weight, str) else "custom"
    return OperatorMatrix(out, k, N, n, system.model.fingerprint(), kind)


def apply_transfer_pointwise(system: TorusBranchSystem, form: FormField, x, weight="signed"):
    """(M_k phi)(x) by direct evaluation of the pullback sum."""
    y, J, g = system.branch_data(np.asarray(x, dtype=float))
    w = _weights(system, y, J, g, weight)
    pb = pullback_matrix(J, form.k)
    vals = form(y)  # (branches, points, L)
    return np.einsum("bp,bpal,bpl->pa", w, pb, vals)


def project_samples(samples, n: int, N: int, P: int) -> np.ndarray:
    """Fourier coefficients for modes [-N, N]^n of grid samples (points, components)."""
    comp = samples.shape[-1]
    grid = samples.reshape((P,) * n + (comp,))
    spec = np.fft.fftn(grid, axes=tuple(range(n))) / P**n
    idx = tuple((mode_list(n, N) % P).T)
    return spec[idx].T


class EigenSolveError(RuntimeError):
    pass


def eigenvalues(op: OperatorMatrix, count: int | None = None) -> np.ndarray:
    """Eigenvalues sorted by decreasing modulus (ties broken by argument)."""
    if count is not None and not 0 < count <= op.dim:
        raise ValueError("count must lie in 1..dim")
    try:
        ev = scipy.linalg.eigvals(op.matrix, overwrite_a=False, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(op.matrix)
        raise EigenSolveError(f"eigensolver failed (condition number {cond:.3e}): {exc}") from exc
    order = np.lexsort((np.angle(ev), -np.round(np.abs(ev), 13)))
    ev = ev[order]
    return ev if count is None else ev[:count]


def pressure_estimate(system: TorusBranchSystem, N: int = 8) -> float:
    """e^P as the leading eigenvalue modulus of M_0^+ (weights |g|)."""
    op = assemble_transfer_matrix(system, 0, N, weight="abs")
    return float(np.abs(eigenvalues(op, 1)[0]))


def pressure_from_orbits(table, m: int) -> float:
    """(sum_{Fix f^m} |g^(m)|)^{1/m}, a periodic-orbit estimate of e^P."""
    return float(np.sum(np.abs(table[m].weight)) ** (1.0 / m))


def holder_pressure_bound(system: TorusBranchSystem, t: float, ell: int, N: int = 8, resolution: int = 32) -> float:
    """(sup_x L_{0,t'}^ell 1)^{1/(t' ell)} with 1/t + 1/t' = 1.

    L_{0,t'} carries the weight |det Dpsi| (|g| / |det Dpsi|)^{t'}; as ell grows
    this bounds the spectral radius of M_0^+ on L^t.
    """
    if t <= 1:
        raise ValueError("t must exceed 1")
    tp = t / (t - 1.0)

    def weight(y, J, g):
        dj = np.abs(np.linalg.det(J))
        return dj * (np.abs(g) / dj) ** tp

    op = assemble_transfer_matrix(system, 0, N, weight=weight)
    v = np.zeros(op.dim, dtype=complex)
    v[op.dim // 2] = 1.0  # the constant function is mode 0, the middle of mode_list
    for _ in range(ell):
        v = op.matrix @ v
    form = FormField.from_vector(0, system.n, N, v)
    sup = float(np.abs(form(torus_grid(system.n, resolution))).max())
    return sup ** (1.0 / (tp * ell))


def essential_radius_bound(theta: float, exp_pressure: float, k: int, m_smooth: float) -> float:
    """theta^{m + k} e^P."""
    return float(theta ** (m_smooth + k) * exp_pressure)


def effective_smoothness(r: float, default: float = 2.0) -> float:
    """Smoothness entering radius bounds; infinite r is replaced by ``default``."""
    return default if math.isinf(r) else float(r)


@dataclass(frozen=True)
class MatchReport:
    pairs: tuple  # (zero, inverse eigenvalue, distance)
    unmatched_zeros: tuple
    unmatched_inverse_eigenvalues: tuple
    bound: float

    @property
    def max_distance(self) -> float:
        return max((p[2] for p in self.pairs), default=0.0)

    @property
    def bijective(self) -> bool:
        return not self.unmatched_zeros and not self.unmatched_inverse_eigenvalues

    def passed(self, tol: float) -> bool:
        return self.bijective and self.max_distance <= tol

    def to_dict(self) -> dict:
        def c(z):
            return [float(z.real) + 0.0, float(z.imag) + 0.0]

        return {
            "bound": self.bound,
            "pairs": [{"zero": c(z), "inverse_eigenvalue": c(e), "distance": d} for z, e, d in self.pairs],
            "unmatched_zeros": [c(z) for z in self.unmatched_zeros],
            "unmatched_inverse_eigenvalues": [c(e) for e in self.unmatched_inverse_eigenvalues],
            "max_distance": self.max_distance,
        }


def match_zeros_eigenvalues(zeros, eigs, bound: float) -> MatchReport:
    """Greedy bipartite matching of zeros with 1/lambda for |lambda| > bound.

    ``zeros`` is a :class:`~dyndet.series.ZeroSet` (stable, trusted zeros are
    used with multiplicity) or a plain sequence of complex numbers.
    """
    if hasattr(zeros, "expanded"):
        zs = list(zeros.expanded())
    else:
        zs = [complex(z) for z in zeros]
    inv = [1.0 / complex(e) for e in eigs if abs(e) > bound]
    cand = sorted(
        ((abs(z - q), i, j) for i, z in enumerate(zs) for j, q in enumerate(inv)),
        key=lambda t: (t[0], t[1], t[2]),
    )
    used_z, used_e, pairs = set(), set(), []
    for d, i, j in cand:
        if i in used_z or j in used_e:
            continue
        used_z.add(i)
        used_e.add(j)
        pairs.append((zs[i], inv[j], float(d)))
    pairs.sort(key=lambda p: (abs(p[0]), p[0].real, p[0].imag))
    return MatchReport(
        tuple(pairs),
        tuple(z for i, z in enumerate(zs) if i not in used_z),
        tuple(q for j, q in enumerate(inv) if j not in used_e),
        float(bound),
    )


def eigenvalue_csv(rows) -> str:
    """rows: iterable of (k, eigenvalue, trusted)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "re", "im", "modulus", "trusted"])
    for k, ev, trusted in rows:
        w.writerow([k, _fmt(ev.real), _fmt(ev.imag), _fmt(abs(ev)), int(trusted)])
    return buf.getvalue()


def match_json(reports: dict) -> str:
    return json.dumps({str(k): r.to_dict() for k, r in reports.items()}, indent=2, sort_keys=True)


@dataclass(frozen=True)
class DualityResult:
    k: int
    zeros: object
    eigenvalues: np.ndarray
    report: MatchReport
    trusted_radius: float
    eigen_bound: float


def duality_check(system, table, k: int, M: int, N: int, r_eff: float | None = None, theta=None, exp_pressure=None):
    """Zeros of d_k inside 0.8 theta^{-k-r} e^{-P} against eigenvalues above 1.5 theta^{k+r} e^P."""
    from .series import find_zeros, ruelle_flat_determinant_series

    r_eff = effective_smoothness(system.model.r) if r_eff is None else r_eff
    theta = theta_estimate(system) if theta is None else theta
    exp_pressure = pressure_estimate(system) if exp_pressure is None else exp_pressure
    radius = 0.8 * theta ** (-k - r_eff) / exp_pressure
    bound = 1.5 * essential_radius_bound(theta, exp_pressure, k, r_eff)
    d = ruelle_flat_determinant_series(table, k, M)
    zs = find_zeros(d, radius)
    ev = eigenvalues(assemble_transfer_matrix(system, k, N))
    return DualityResult(k, zs, ev, match_zeros_eigenvalues(zs, ev, bound), radius, bound)
