"""Relatively parallel adapted frames (RPAF) and Frenet frames.

The RPAF of an extrinsically given curve is built locally: on each chart
segment a coordinate index ``j`` with ``|T_j|`` bounded away from zero yields
auxiliary normals, Gram-Schmidt turns them into an adapted frame ``M``, and
the rotation ``R`` taking ``M`` to the relatively parallel normals solves
``R' + R A = 0`` where ``A_{jk} = M_j' . M_k``. Segments are patched by
matching the normals at the shared node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._numerics import central_diff4, midpoint4, modified_gram_schmidt
from .curves import CurvatureVector, Curve, SGrid
from .io import atomic_write_text, read_table, write_table

ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class Frame:
    """Adapted frame samples ``(T, N_1..N_n)`` plus the curvature vector.

    ``T`` has shape (count, n+1); ``N`` has shape (count, n, n+1).
    """

    grid: SGrid
    T: np.ndarray = field(repr=False)
    N: np.ndarray = field(repr=False)
    k: CurvatureVector = field(repr=False)

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        N = np.asarray(self.N, dtype=float)
        if N.ndim == 2:
            N = N[:, None, :]
        if T.shape[0] != self.grid.count or N.shape[0] != self.grid.count:
            raise ValueError("frame samples do not match grid")
        if N.shape[1] + 1 != T.shape[1] or N.shape[2] != T.shape[1]:
            raise ValueError("frame needs n normals in R^{n+1}")
        F = np.concatenate([T[:, None, :], N], axis=1)
        drift = np.max(np.abs(F @ np.transpose(F, (0, 2, 1)) - np.eye(T.shape[1])))
        if drift > ORTHO_TOL:
            raise ValueError(f"frame rows are not orthonormal (drift {drift:.2e})")
        for arr in (T, N):
            arr.setflags(write=False)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "N", N)

    @property
    def dim(self) -> int:
        return self.T.shape[1]

    @property
    def n(self) -> int:
        return self.N.shape[1]

    def matrices(self) -> np.ndarray:
        """Frame rows stacked as (count, n+1, n+1) orthogonal matrices."""
        return np.concatenate([self.T[:, None, :], self.N], axis=1)

    def orthonormality_drift(self) -> float:
        F = self.matrices()
        G = F @ np.transpose(F, (0, 2, 1))
        return float(np.max(np.abs(G - np.eye(self.dim))))

    def parallel_defect(self) -> np.ndarray:
        """Per-node norm of the normal-space component of ``N_j'``.

        Vanishes (to discretisation order) for a relatively parallel frame.
        """
        dN = central_diff4(self.N, self.grid.ds)
        proj = np.einsum("ijd,ikd->ijk", dN, self.N)
        return np.linalg.norm(proj, axis=(1, 2))

    def to_csv(self, path) -> None:
        write_frame_csv(self, path)


@dataclass(frozen=True)
class ChartPlan:
    """Chart choices: list of ``(start, end, j)`` with ``j`` 1-based."""

    segments: tuple

    def to_json(self) -> str:
        return json.dumps(
            {"segments": [{"start": s, "end": e, "chart": j} for s, e, j in self.segments]},
            indent=2,
        )

    def write_json(self, path) -> None:
        atomic_write_text(path, self.to_json() + "\n")


def chart_threshold(dim: int) -> float:
    return 1.0 / (2.0 * dim)


def plan_charts(curve: Curve, s_index0: int, max_segment_nodes: int | None = None) -> ChartPlan:
    """Choose chart segments outward from ``s_index0`` in both directions.

    At every segment start the coordinate with largest ``|T_j|`` is chosen
    (lowest index on ties); the segment ends before ``T_j^2`` would drop below
    ``1/(2(n+1))`` or when the node cap is reached. Consecutive segments share
    their boundary node.
    """
    T = curve.tangents
    count, dim = T.shape
    thr = chart_threshold(dim)
    cap = max_segment_nodes if max_segment_nodes is not None else count
    if cap < 2:
        raise ValueError("segments need at least 2 nodes")

    def sweep(start: int, step: int):
        segs = []
        i = start
        last = count - 1 if step > 0 else 0
        while i != last:
            j = int(np.argmax(np.abs(T[i])))
            end = i
            while end != last and abs(end - i) + 1 < cap and T[end + step, j] ** 2 >= thr:
                end += step
            if end == i:
                # the next node already violates the chart; take one step anyway
                end = i + step
            segs.append((i, end, j + 1))
            i = end
        return segs

    fwd = sweep(s_index0, +1)
    bwd = sweep(s_index0, -1)
    segs = [(min(a, b), max(a, b), j) for a, b, j in bwd][::-1] + fwd
    return ChartPlan(tuple(segs))


def _auxiliary_normals(T: np.ndarray, j: int) -> np.ndarray:
    """Auxiliary normals built from the chart index ``j`` (0-based).

    For each other index ``i`` the vector has ``T_j`` in slot ``i`` and
    ``-T_i`` in slot ``j``; they are unit and orthogonal to ``T`` but not to
    each other. Returns (count, n, n+1).
    """
    count, dim = T.shape
    others = [i for i in range(dim) if i != j]
    M = np.zeros((count, dim - 1, dim))
    for r, i in enumerate(others):
        M[:, r, i] = T[:, j]
        M[:, r, j] = -T[:, i]
        M[:, r] /= np.sqrt(T[:, j] ** 2 + T[:, i] ** 2)[:, None]
    return M


def _local_adapted_frame(T: np.ndarray, j: int) -> np.ndarray:
    """Gram-Schmidt of ``(T, M~_1..M~_n)`` at each node; returns normals (count, n, n+1)."""
    aux = _auxiliary_normals(T, j)
    out = np.empty_like(aux)
    for i in range(T.shape[0]):
        q = modified_gram_schmidt(np.vstack([T[i][None, :], aux[i]]))
        out[i] = q[1:]
    return out


def _rotation_step(R: np.ndarray, A0, Am, A1, h: float) -> np.ndarray:
    f = lambda R_, A_: -R_ @ A_  # noqa: E731
    k1 = f(R, A0)
    k2 = f(R + 0.5 * h * k1, Am)
    k3 = f(R + 0.5 * h * k2, Am)
    k4 = f(R + h * k3, A1)
    R = R + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    # one Newton step towards the polar factor
    return 0.5 * (R + np.linalg.inv(R).T)


def _solve_segment(
    T: np.ndarray, ds: float, lo: int, hi: int, j: int, start: int, N_start: np.ndarray
) -> np.ndarray:
    """Relatively parallel normals on nodes ``lo..hi`` starting from node ``start``."""
    count = T.shape[0]
    # extend by two nodes where possible so derivatives are central at segment ends
    elo, ehi = max(lo - 2, 0), min(hi + 2, count - 1)
    M = _local_adapted_frame(T[elo : ehi + 1], j)
    dM = central_diff4(M, ds)
    A = np.einsum("ijd,ikd->ijk", dM, M)
    A = 0.5 * (A - np.transpose(A, (0, 2, 1)))
    A_mid = midpoint4(A)

    off = elo
    R = N_start @ M[start - off].T
    out = np.empty((hi - lo + 1,) + N_start.shape)
    out[start - lo] = R @ M[start - off]
    step = 1 if start == lo else -1
    i = start
    target = hi if step > 0 else lo
    while i != target:
        a, b = i - off, i + step - off
        mid = A_mid[min(a, b)]
        R = _rotation_step(R, A[a], mid, A[b], step * ds)
        i += step
        out[i - lo] = R @ M[i - off]
    return out


def build_rpaf(
    curve: Curve,
    initial_normals: np.ndarray,
    s_index0: int = 0,
    max_segment_nodes: int | None = None,
    return_plan: bool = False,
):
    """Relatively parallel adapted frame with prescribed normals at ``s_index0``.

    Parameters
    ----------
    curve : Curve
    initial_normals : (n, n+1) array
        Rows completing ``T(s_index0)`` to an orthonormal basis.
    s_index0 : int
        Node where the initial condition is imposed.
    max_segment_nodes : int, optional
        Caps chart segment length (forces different chart plans).
    return_plan : bool
        Also return the ChartPlan.
    """
    T = curve.tangents
    count, dim = T.shape
    if count < 3:
        raise ValueError("frame construction needs at least 3 nodes")
    if not 0 <= s_index0 < count:
        raise IndexError("s_index0 outside grid")
    tdev = np.max(np.abs(np.linalg.norm(T, axis=1) - 1.0))
    if tdev > 1e-9:
        raise ValueError(f"degenerate tangent field (|T| deviates by {tdev:.2e})")
    N0 = np.atleast_2d(np.asarray(initial_normals, dtype=float))
    if N0.shape != (dim - 1, dim):
        raise ValueError(f"initial normals must be {(dim - 1, dim)}, got {N0.shape}")
    F0 = np.vstack([T[s_index0][None, :], N0])
    if np.max(np.abs(F0 @ F0.T - np.eye(dim))) > 1e-10:
        raise ValueError("initial normals are not orthonormal to the tangent")

    plan = plan_charts(curve, s_index0, max_segment_nodes)
    N = np.empty((count, dim - 1, dim))
    N[s_index0] = N0
    ds = curve.grid.ds
    # forward segments start at their low end, backward ones at their high end
    for lo, hi, j in plan.segments:
        if lo >= s_index0:
            N[lo : hi + 1] = _solve_segment(T, ds, lo, hi, j - 1, lo, N[lo])
    for lo, hi, j in reversed(plan.segments):
        if hi <= s_index0:
            N[lo : hi + 1] = _solve_segment(T, ds, lo, hi, j - 1, hi, N[hi])

    k = _curvature_components(T, N, ds)
    frame = Frame(curve.grid, T, N, CurvatureVector(curve.grid, k))
    return (frame, plan) if return_plan else frame


def _curvature_components(T: np.ndarray, N: np.ndarray, ds: float) -> np.ndarray:
    dT = central_diff4(T, ds)
    return np.einsum("id,ijd->ij", dT, N)


def curvature_from_frame(frame: Frame) -> CurvatureVector:
    """``k_j = T' . N_j`` by (fourth-order) central differences."""
    return CurvatureVector(frame.grid, _curvature_components(frame.T, frame.N, frame.grid.ds))


def frenet_frame_3d(curve: Curve, kappa_min: float = 1e-8):
    """Frenet frame ``(T, M1, M2)`` of a space curve with curvature and torsion.

    Returns
    -------
    (frame, kappa, tau)
        ``frame`` has shape (count, 3, 3) with rows T, M1, M2.
    """
    if curve.dim != 3:
        raise ValueError("Frenet frame comparison is implemented for dim = 3 only")
    ds = curve.grid.ds
    T = curve.tangents
    dT = central_diff4(T, ds)
    kappa = np.linalg.norm(dT, axis=1)
    bad = np.nonzero(kappa <= kappa_min)[0]
    if bad.size:
        raise ValueError(f"vanishing curvature at node {int(bad[0])}: Frenet frame undefined")
    M1 = dT / kappa[:, None]
    M2 = np.cross(T, M1)
    tau = np.einsum("id,id->i", central_diff4(M1, ds), M2)
    return np.stack([T, M1, M2], axis=1), kappa, tau


def frenet_frame_2d(curve: Curve):
    """Planar frame ``(T, N)`` with ``N = (-T_2, T_1)`` and the signed curvature."""
    if curve.dim != 2:
        raise ValueError("2D Frenet frame needs a planar curve")
    T = curve.tangents
    N = np.column_stack([-T[:, 1], T[:, 0]])
    dT = central_diff4(T, curve.grid.ds)
    signed = -dT[:, 0] * T[:, 1] + T[:, 0] * dT[:, 1]
    return np.stack([T, N], axis=1), signed


def rotation_angle(N1: np.ndarray, M1: np.ndarray, M2: np.ndarray) -> np.ndarray:
    """Unwrapped angle ``theta`` with ``N1 = cos(theta) M1 - sin(theta) M2``.

    For a relatively parallel ``N1`` and the Frenet pair (M1, M2) this angle
    is a primitive of the torsion.
    """
    ang = np.arctan2(-np.einsum("id,id->i", N1, M2), np.einsum("id,id->i", N1, M1))
    return np.unwrap(ang)


def frame_csv_header(dim: int) -> list[str]:
    n = dim - 1
    head = ["s"] + [f"t{d}" for d in range(dim)]
    for j in range(1, n + 1):
        head += [f"n{j}_{d}" for d in range(dim)]
    return head + [f"k{j}" for j in range(1, n + 1)]


def write_frame_csv(frame: Frame, path) -> None:
    cols = [frame.grid.nodes[:, None], frame.T]
    cols += [frame.N[:, j, :] for j in range(frame.n)]
    cols.append(frame.k.k)
    write_table(path, frame_csv_header(frame.dim), np.hstack(cols))


def read_frame_csv(path) -> Frame:
    header, rows = read_table(path)
    # header length = 1 + dim + n*dim + n with n = dim - 1
    dim = next(d for d in range(2, 64) if 1 + d + (d - 1) * d + (d - 1) == len(header))
    if header != frame_csv_header(dim):
        raise ValueError("unexpected frame CSV header")
    n = dim - 1
    s = rows[:, 0]
    grid = SGrid(float(s[0]), float((s[-1] - s[0]) / (len(s) - 1)), len(s))
    T = rows[:, 1 : 1 + dim]
    N = np.stack([rows[:, 1 + dim * (j + 1) : 1 + dim * (j + 2)] for j in range(n)], axis=1)
    k = rows[:, 1 + dim * (n + 1) :]
    return Frame(grid, T, N, CurvatureVector(grid, k))
