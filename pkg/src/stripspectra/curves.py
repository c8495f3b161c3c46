"""Arc-length parameterised curves in R^{n+1}.

Curves are stored as node samples over a uniform arc-length grid. They can be
generated from closed-form families (line, circle, helix) or synthesised from
a prescribed curvature vector by integrating the relatively parallel frame
equations together with the curve itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from ._numerics import modified_gram_schmidt
from .io import read_table, write_table

if TYPE_CHECKING:
    from .frames import Frame

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class SGrid:
    """Uniform arc-length grid ``s_i = s0 + i*ds``, ``i = 0..count-1``."""

    s0: float
    ds: float
    count: int

    def __post_init__(self):
        if not self.ds > 0:
            raise ValueError(f"grid step must be positive, got {self.ds}")
        if self.count < 2:
            raise ValueError(f"grid needs at least 2 nodes, got {self.count}")

    @classmethod
    def spanning(cls, start: float, stop: float, ds: float) -> "SGrid":
        """Grid from ``start`` to (approximately) ``stop`` with step ``ds``."""
        count = int(round((stop - start) / ds)) + 1
        return cls(float(start), float(ds), count)

    @property
    def nodes(self) -> np.ndarray:
        return self.s0 + self.ds * np.arange(self.count)

    @property
    def end(self) -> float:
        return self.s0 + self.ds * (self.count - 1)

    def index_of(self, s: float) -> int:
        return int(round((s - self.s0) / self.ds))


@dataclass(frozen=True)
class Curve:
    """Node samples of an arc-length parameterised curve and its tangent."""

    grid: SGrid
    points: np.ndarray
    tangents: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        tan = np.asarray(self.tangents, dtype=float)
        if pts.ndim != 2 or pts.shape != tan.shape:
            raise ValueError("points and tangents must be (count, dim) arrays of equal shape")
        if pts.shape[0] != self.grid.count:
            raise ValueError("sample count does not match grid")
        if pts.shape[1] < 2:
            raise ValueError("curves live in R^{n+1} with n >= 1")
        drift = np.max(np.abs(np.linalg.norm(tan, axis=1) - 1.0))
        if drift > UNIT_TOL:
            raise ValueError(f"tangents are not unit length (max deviation {drift:.3e})")
        pts.setflags(write=False)
        tan.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "tangents", tan)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_csv(self, path) -> None:
        write_curve_csv(self, path)


@dataclass(frozen=True)
class CurvatureVector:
    """Curvature vector ``k = (k_1..k_n)`` sampled at the grid nodes."""

    grid: SGrid
    k: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        if k.ndim == 1:
            k = k[:, None]
        if k.shape[0] != self.grid.count:
            raise ValueError("curvature samples do not match grid")
        if not np.all(np.isfinite(k)):
            raise ValueError("curvature vector must be finite at every node")
        k.setflags(write=False)
        object.__setattr__(self, "k", k)

    @property
    def n(self) -> int:
        return self.k.shape[1]

    @property
    def kappa(self) -> np.ndarray:
        return np.linalg.norm(self.k, axis=1)


def make_analytic_curve(family: str, params: dict | None, dim: int, grid: SGrid) -> Curve:
    """Sample a line, circle or helix at the nodes of ``grid``.

    The circle lies in the x0-x1 plane and the helix winds about the x2 axis;
    both are re-parameterised by arc length (helix speed ``c = sqrt(r^2+h^2)``).
    """
    params = dict(params or {})
    s = grid.nodes
    pts = np.zeros((grid.count, dim))
    tan = np.zeros((grid.count, dim))
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if family == "line":
        pts[:, 0] = s
        tan[:, 0] = 1.0
    elif family == "circle":
        r = float(params.get("r", 1.0))
        if r <= 0:
            raise ValueError(f"circle radius must be positive, got {r}")
        phi = s / r
        pts[:, 0] = r * np.cos(phi)
        pts[:, 1] = r * np.sin(phi)
        tan[:, 0] = -np.sin(phi)
        tan[:, 1] = np.cos(phi)
    elif family == "helix":
        if dim < 3:
            raise ValueError("helix requires dim >= 3")
        r = float(params.get("r", 1.0))
        h = float(params.get("h", 1.0))
        if r <= 0:
            raise ValueError(f"helix radius must be positive, got {r}")
        c = np.hypot(r, h)
        phi = s / c
        pts[:, 0] = r * np.cos(phi)
        pts[:, 1] = r * np.sin(phi)
        pts[:, 2] = h * phi
        tan[:, 0] = -r / c * np.sin(phi)
        tan[:, 1] = r / c * np.cos(phi)
        tan[:, 2] = h / c
    else:
        raise ValueError(f"unknown curve family {family!r}")
    return Curve(grid, pts, tan)


def curvature_of(curve: Curve) -> np.ndarray:
    """Scalar curvature ``kappa = |T'|`` at the nodes.

    Second-order central differences inside, second-order one-sided at the ends.
    """
    if curve.grid.count < 3:
        raise ValueError("curvature needs at least 3 nodes")
    dT = np.gradient(curve.tangents, curve.grid.ds, axis=0, edge_order=2)
    return np.linalg.norm(dT, axis=1)


def _frame_rhs(state: np.ndarray, k: np.ndarray) -> np.ndarray:
    # state rows: Gamma, T, N_1..N_n
    out = np.empty_like(state)
    T = state[1]
    N = state[2:]
    out[0] = T
    out[1] = k @ N
    out[2:] = -np.outer(k, T)
    return out


def synthesize_from_curvature(
    k: CurvatureVector, initial_frame: np.ndarray, origin: np.ndarray | None = None
) -> tuple[Curve, "Frame"]:
    """Integrate the frame equations for a prescribed curvature vector.

    Parameters
    ----------
    k : CurvatureVector
        Curvature samples; treated as piecewise linear between nodes.
    initial_frame : (n+1, n+1) array
        Orthonormal rows ``(T, N_1, ..., N_n)`` at the first grid node.
    origin : array, optional
        ``Gamma(s0)``; defaults to the origin.

    Returns
    -------
    (Curve, Frame)
        The curve (points are the running integral of T) and its relatively
        parallel frame. Classical RK4 with fixed step; the frame rows are
        re-orthonormalised after every step.
    """
    from .frames import Frame

    F0 = np.asarray(initial_frame, dtype=float)
    dim = k.n + 1
    if F0.shape != (dim, dim):
        raise ValueError(f"initial frame must be {dim}x{dim}, got {F0.shape}")
    if np.max(np.abs(F0 @ F0.T - np.eye(dim))) > 1e-12:
        raise ValueError("initial frame is not orthonormal")
    origin = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)

    g = k.grid
    h = g.ds
    kk = k.k
    state = np.vstack([origin[None, :], F0])
    out = np.empty((g.count,) + state.shape)
    out[0] = state
    for i in range(g.count - 1):
        k0 = kk[i]
        k1 = kk[i + 1]
        km = 0.5 * (k0 + k1)
        s1 = _frame_rhs(state, k0)
        s2 = _frame_rhs(state + 0.5 * h * s1, km)
        s3 = _frame_rhs(state + 0.5 * h * s2, km)
        s4 = _frame_rhs(state + h * s3, k1)
        state = state + (h / 6.0) * (s1 + 2 * s2 + 2 * s3 + s4)
        state[1:] = modified_gram_schmidt(state[1:])
        out[i + 1] = state

    curve = Curve(g, out[:, 0, :], out[:, 1, :])
    frame = Frame(g, out[:, 1, :], out[:, 2:, :], k)
    return curve, frame


def write_curve_csv(curve: Curve, path) -> None:
    dim = curve.dim
    header = ["s"] + [f"x{j}" for j in range(dim)] + [f"t{j}" for j in range(dim)]
    rows = np.column_stack([curve.grid.nodes, curve.points, curve.tangents])
    write_table(path, header, rows)


def read_curve_csv(path) -> Curve:
    header, rows = read_table(path)
    dim = (len(header) - 1) // 2
    expected = ["s"] + [f"x{j}" for j in range(dim)] + [f"t{j}" for j in range(dim)]
    if header != expected:
        raise ValueError(f"unexpected curve CSV header {header}")
    s = rows[:, 0]
    ds = (s[-1] - s[0]) / (len(s) - 1)
    grid = SGrid(float(s[0]), float(ds), len(s))
    return Curve(grid, rows[:, 1 : 1 + dim], rows[:, 1 + dim :])


__all__ = [
    "SGrid",
    "Curve",
    "CurvatureVector",
    "make_analytic_curve",
    "curvature_of",
    "synthesize_from_curvature",
    "write_curve_csv",
    "read_curve_csv",
]
