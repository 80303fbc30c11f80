"""C-infinity cutoffs and bumps used for partitions of unity and test forms."""

from __future__ import annotations

import numpy as np


def _psi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0
    out[m] = np.exp(-1.0 / t[m])
    return out


def _dpsi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0
    out[m] = np.exp(-1.0 / t[m]) / t[m] ** 2
    return out


def smooth_step(t):
    """0 for t <= 0, 1 for t >= 1, C-infinity in between."""
    a, b = _psi(t), _psi(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def smooth_step_derivative(t):
    t = np.asarray(t, dtype=float)
    a, b = _psi(t), _psi(1.0 - t)
    da, db = _dpsi(t), -_dpsi(1.0 - t)
    return (da * b - a * db) / (a + b) ** 2


def bump(s):
    """exp(1 - 1/(1 - s)) for 0 <= s < 1 (s is a squared radius), else 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = s < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m]))
    return out


def bump_derivative(s):
    """d/ds of :func:`bump`."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = s < 1.0
    out[m] = -np.exp(1.0 - 1.0 / (1.0 - s[m])) / (1.0 - s[m]) ** 2
    return out


def bump_second_derivative(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = s < 1.0
    q = 1.0 - s[m]
    b = np.exp(1.0 - 1.0 / q)
    # d/ds[-b/q^2] with db/ds = -b/q^2 and dq/ds = -1
    out[m] = b / q**4 - 2.0 * b / q**3
    return out
