"""Exterior algebra bookkeeping for k-forms on R^n.

Components of a k-form are indexed by increasing tuples of 0-based axis
indices (lexicographic order), so ``(0, 1)`` stands for dx_1 ^ dx_2.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations

import numpy as np


@lru_cache(maxsize=None)
def multi_indices(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """Increasing k-tuples in {0, ..., n-1}, lexicographically ordered."""
    if not 0 <= k <= n:
        raise ValueError(f"form degree {k} outside 0..{n}")
    return tuple(combinations(range(n), k))


def permutation_sign(seq) -> int:
    """Sign of the permutation sorting ``seq``; 0 when an entry repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def wedge_sign(*indices) -> int:
    """Sign s with dx_I ^ dx_J ^ ... = s dx_{sorted(I+J+...)}."""
    flat = [i for idx in indices for i in idx]
    return permutation_sign(flat)


def complement(n: int, idx) -> tuple[int, ...]:
    return tuple(i for i in range(n) if i not in idx)


def minor(J: np.ndarray, rows, cols) -> np.ndarray:
    """Stacked minors det J[rows, cols] over the trailing two axes."""
    rows, cols = list(rows), list(cols)
    if len(rows) != len(cols):
        raise ValueError("minor needs as many rows as columns")
    if not rows:
        return np.ones(J.shape[:-2], dtype=J.dtype)
    sub = J[..., rows, :][..., :, cols]
    if len(rows) == 1:
        return sub[..., 0, 0]
    if len(rows) == 2:
        return sub[..., 0, 0] * sub[..., 1, 1] - sub[..., 0, 1] * sub[..., 1, 0]
    return np.linalg.det(sub)


def pullback_matrix(J: np.ndarray, k: int) -> np.ndarray:
    """Matrix of the pullback on k-form components.

    For psi with Jacobian J (shape (..., n, n)) and phi = sum_L phi_L dx_L,
    (psi^* phi)_I(x) = sum_L P[..., I, L] phi_L(psi(x)) with
    P[I, L] = det(J[L, I]) (rows L of the image, columns I of the source).
    """
    n = J.shape[-1]
    idx = multi_indices(n, k)
    out = np.empty(J.shape[:-2] + (len(idx), len(idx)), dtype=J.dtype)
    for a, I in enumerate(idx):
        for b, L in enumerate(idx):
            out[..., a, b] = minor(J, L, I)
    return out


def exterior_trace(J: np.ndarray, k: int) -> np.ndarray:
    """tr Lambda^k(J): the sum of the principal k x k minors."""
    n = J.shape[-1]
    total = np.zeros(J.shape[:-2], dtype=J.dtype)
    for I in multi_indices(n, k):
        total = total + minor(J, I, I)
    return total


def exterior_derivative(partials: dict, k: int, n: int) -> dict:
    """Components of d phi from the partial derivatives of phi.

    ``partials[(I, j)]`` holds d phi_I / d x_j; returns {K: (d phi)_K} for
    the (k+1)-multi-indices K.
    """
    out = {}
    for K in multi_indices(n, k + 1):
        acc = 0.0
        for pos, j in enumerate(K):
            I = K[:pos] + K[pos + 1:]
            # dx_j ^ dx_I = (-1)^pos dx_K
            acc = acc + (-1) ** pos * partials[(I, j)]
        out[K] = acc
    return out
