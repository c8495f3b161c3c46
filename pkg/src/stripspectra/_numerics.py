"""Small numerical helpers shared across modules."""

from __future__ import annotations

import numpy as np


def modified_gram_schmidt(rows: np.ndarray) -> np.ndarray:
    """Orthonormalise the rows of ``rows`` in order (modified Gram-Schmidt)."""
    q = np.array(rows, dtype=float, copy=True)
    for i in range(q.shape[0]):
        for j in range(i):
            q[i] -= (q[i] @ q[j]) * q[j]
        q[i] /= np.linalg.norm(q[i])
    return q


def central_diff4(y: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order finite-difference derivative along axis 0.

    Five-point central stencil inside; fourth-order one-sided stencils on the
    two nodes at each end. Needs at least 5 samples.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 5:
        return np.gradient(y, h, axis=0, edge_order=2 if n >= 3 else 1)
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * h)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * h)
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * h)
    return d


def midpoint4(y: np.ndarray) -> np.ndarray:
    """Values at the midpoints ``i+1/2`` by cubic (4th-order) interpolation."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    mid = 0.5 * (y[:-1] + y[1:])
    if n >= 4:
        mid[1:-1] = (-y[:-3] + 9 * y[1:-2] + 9 * y[2:-1] - y[3:]) / 16.0
        mid[0] = (5 * y[0] + 15 * y[1] - 5 * y[2] + y[3]) / 16.0
        mid[-1] = (5 * y[-1] + 15 * y[-2] - 5 * y[-3] + y[-4]) / 16.0
    return mid


def richardson(coarse: float, fine: float, ratio: float, order: float = 2.0) -> float:
    """Extrapolate ``X(h)`` from ``X(h)`` and ``X(h/ratio)`` assuming ``O(h^order)``."""
    r = ratio**order
    return (r * fine - coarse) / (r - 1.0)


def bump(x):
    """Standard C-infinity bump ``exp(1 - 1/(1-x^2))`` on (-1, 1), peak 1 at 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    xi = x[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - xi * xi))
    return out


def bump_prime(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    xi = x[inside]
    q = 1.0 - xi * xi
    out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * xi / (q * q))
    return out


def bump_second(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    xi = x[inside]
    q = 1.0 - xi * xi
    g = -2.0 * xi / (q * q)
    dg = -2.0 / (q * q) - 8.0 * xi * xi / q**3
    out[inside] = np.exp(1.0 - 1.0 / q) * (g * g + dg)
    return out


def _psi(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _psi_prime(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = np.exp(-1.0 / xp) / (xp * xp)
    return out


def smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    a = _psi(x)
    b = _psi(1.0 - np.asarray(x, dtype=float))
    return a / (a + b)


def smoothstep_prime(x):
    x = np.asarray(x, dtype=float)
    a, b = _psi(x), _psi(1.0 - x)
    da, db = _psi_prime(x), -_psi_prime(1.0 - x)
    den = a + b
    return (da * den - a * (da + db)) / (den * den)


def plateau(x):
    """C-infinity cutoff: 1 on [-1, 1], 0 outside [-2, 2]."""
    return smoothstep(2.0 - np.abs(np.asarray(x, dtype=float)))


def plateau_prime(x):
    x = np.asarray(x, dtype=float)
    return -np.sign(x) * smoothstep_prime(2.0 - np.abs(x))


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights on ``n`` (odd) equispaced points."""
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson's rule needs an odd number (>= 3) of points")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)
