"""Finite-difference quadratic forms on truncated strips.

Everything is assembled from squared differences, so the stiffness matrices are
symmetric by construction. The 2D unknowns are ordered s-major: index
``i * nt + m`` for s-node ``i`` and t-node ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .io import write_json
from .stripgeom import AssumptionError, StripModel, validate

END_CONDITIONS = ("dirichlet", "neumann")
SURROGATE_POINTS = 129


@dataclass(frozen=True)
class Mesh2D:
    """Tensor mesh of ``(-S, S) x (-a, a)`` with ``ns x nt`` interior nodes."""

    S: float
    a: float
    ns: int
    nt: int

    def __post_init__(self):
        if not (self.S > 0 and self.a > 0):
            raise ValueError("S and a must be positive")
        if self.ns < 4 or self.nt < 4:
            raise ValueError("need at least 4 interior nodes in each direction")

    @property
    def hs(self) -> float:
        return 2.0 * self.S / (self.ns + 1)

    @property
    def ht(self) -> float:
        return 2.0 * self.a / (self.nt + 1)

    def s_nodes(self, end_condition: str = "dirichlet") -> np.ndarray:
        idx = np.arange(1, self.ns + 1) if end_condition == "dirichlet" else np.arange(self.ns + 2)
        return -self.S + self.hs * idx

    def t_nodes(self) -> np.ndarray:
        return -self.a + self.ht * np.arange(1, self.nt + 1)

    def refined(self) -> "Mesh2D":
        """Nested refinement: both steps halve."""
        return Mesh2D(self.S, self.a, 2 * self.ns + 1, 2 * self.nt + 1)

    def to_dict(self) -> dict:
        return {"S": self.S, "a": self.a, "ns": self.ns, "nt": self.nt, "hs": self.hs, "ht": self.ht}


@dataclass(frozen=True)
class Mesh1D:
    """Interior nodes of ``(lo, hi)`` (Dirichlet) with step ``(hi - lo)/(n + 1)``."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("empty interval")
        if self.n < 2:
            raise ValueError("need at least 2 interior nodes")

    @classmethod
    def symmetric(cls, S: float, n: int) -> "Mesh1D":
        return cls(-float(S), float(S), n)

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + self.h * np.arange(1, self.n + 1)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "n": self.n, "h": self.h}


@dataclass(frozen=True)
class DiscreteForm:
    """Stiffness ``K`` (sparse, symmetric) and diagonal mass ``M`` (stored as a vector)."""

    stiffness: sp.csr_matrix = field(repr=False)
    mass: np.ndarray = field(repr=False)
    end_condition: str
    mesh: object
    shape: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)
    parts: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        K = sp.csr_matrix(self.stiffness)
        M = np.asarray(self.mass, dtype=float)
        if K.shape != (M.size, M.size):
            raise ValueError("stiffness and mass sizes differ")
        if np.any(M <= 0):
            raise ValueError("mass entries must be positive")
        M.setflags(write=False)
        object.__setattr__(self, "stiffness", K)
        object.__setattr__(self, "mass", M)
        if not self.shape:
            object.__setattr__(self, "shape", (M.size,))

    @property
    def size(self) -> int:
        return self.mass.size

    @property
    def K(self) -> sp.csr_matrix:
        return self.stiffness

    @property
    def M(self) -> sp.dia_matrix:
        return sp.diags(self.mass)

    def shifted(self, potential) -> "DiscreteForm":
        """Form with ``K + diag(potential * mass)`` (same mesh)."""
        pot = np.asarray(potential, dtype=float) * np.ones(self.size)
        K = (self.stiffness + sp.diags(pot * self.mass)).tocsr()
        return DiscreteForm(K, self.mass, self.end_condition, self.mesh, self.shape, dict(self.meta))

    def reweighted(self, weight) -> "DiscreteForm":
        """Same stiffness with mass multiplied node-wise by ``weight``."""
        return DiscreteForm(
            self.stiffness, self.mass * np.asarray(weight, dtype=float), self.end_condition,
            self.mesh, self.shape, dict(self.meta),
        )

    def export(self, stem) -> tuple[Path, Path, Path]:
        """Matrix Market files for K and M plus a JSON mesh sidecar."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        kp = stem.with_name(stem.name + "_K.mtx")
        mp = stem.with_name(stem.name + "_M.mtx")
        jp = stem.with_name(stem.name + "_mesh.json")
        scipy.io.mmwrite(str(kp), sp.coo_matrix(self.stiffness), symmetry="symmetric", precision=17)
        scipy.io.mmwrite(str(mp), sp.coo_matrix(self.M), symmetry="symmetric", precision=17)
        mesh = self.mesh.to_dict() if hasattr(self.mesh, "to_dict") else {}
        write_json(jp, {"end_condition": self.end_condition, "shape": list(self.shape),
                        "mesh": mesh, "meta": self.meta})
        return kp, mp, jp


def read_matrix_market(path) -> sp.csr_matrix:
    return sp.csr_matrix(scipy.io.mmread(str(path)))


def _edge_matrix(n: int, p, q, w) -> sp.csr_matrix:
    """``sum_e w_e (u_p - u_q)^2`` as a matrix; ``q < 0`` marks a Dirichlet neighbour."""
    p = np.asarray(p)
    q = np.asarray(q)
    w = np.asarray(w, dtype=float)
    inner = q >= 0
    pi, qi, wi = p[inner], q[inner], w[inner]
    rows = np.concatenate([pi, qi, pi, qi, p[~inner]])
    cols = np.concatenate([pi, qi, qi, pi, p[~inner]])
    vals = np.concatenate([wi, wi, -wi, -wi, w[~inner]])
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return K


def _chain_edges(count: int, dirichlet: bool):
    """Edges of a 1D chain of ``count`` nodes; -1 marks an eliminated end node."""
    p = np.arange(count - 1)
    q = p + 1
    if dirichlet:
        p = np.r_[0, p, count - 1]
        q = np.r_[-1, q, -1]
    return p, q


def _check_window(model: StripModel, lo: float, hi: float) -> None:
    if not model.covers(lo, hi):
        raise ValueError(
            f"model window [{model.grid.s0}, {model.grid.end}] does not cover the mesh [{lo}, {hi}]"
        )


def _check_bound(model: StripModel, a: float) -> None:
    if a * model.max_kdot >= 1.0:
        raise AssumptionError(f"a*max|k.Theta| = {a * model.max_kdot:.6g} >= 1")


def assemble_2d(model: StripModel, mesh: Mesh2D, end_condition: str = "dirichlet") -> DiscreteForm:
    """Discrete form ``h[psi] = int |d_s psi|^2 / f + int |d_t psi|^2 f`` with mass ``f``.

    ``f`` is evaluated at s-edge midpoints in the first term, t-edge midpoints in
    the second and at nodes in the mass.
    """
    if end_condition not in END_CONDITIONS:
        raise ValueError(f"end condition must be one of {END_CONDITIONS}")
    if abs(mesh.a - model.a) > 1e-12 * model.a:
        raise ValueError(f"mesh half-width {mesh.a} differs from the model's {model.a}")
    _check_window(model, -mesh.S, mesh.S)
    _check_bound(model, model.a)
    dirichlet = end_condition == "dirichlet"
    s = mesh.s_nodes(end_condition)
    t = mesh.t_nodes()
    ns, nt = s.size, t.size
    hs, ht = mesh.hs, mesh.ht
    N = ns * nt
    idx = np.arange(N).reshape(ns, nt)

    # longitudinal edges, including the eliminated neighbours at s = +-S
    ps, qs = _chain_edges(ns, dirichlet)
    s_mid = np.where(qs >= 0, 0.5 * (s[ps] + s[np.maximum(qs, 0)]), 0.0)
    if dirichlet:
        s_mid[0] = s[0] - 0.5 * hs
        s_mid[-1] = s[-1] + 0.5 * hs
    kd_m = model.kdot_theta_at(s_mid)
    tp_m = model.abs_theta_prime_at(s_mid)
    f_mid = np.sqrt((1 - t[None, :] * kd_m[:, None]) ** 2 + (t[None, :] * tp_m[:, None]) ** 2)
    P = idx[ps, :]
    Q = np.where(qs[:, None] >= 0, idx[np.maximum(qs, 0), :], -1)
    K1 = _edge_matrix(N, P.ravel(), Q.ravel(), ((ht / hs) / f_mid).ravel())

    # transverse edges, t = +-a always Dirichlet
    pt, qt = _chain_edges(nt, True)
    t_mid = np.where(qt >= 0, 0.5 * (t[pt] + t[np.maximum(qt, 0)]), 0.0)
    t_mid[0] = -mesh.a + 0.5 * ht
    t_mid[-1] = mesh.a - 0.5 * ht
    kd_n = model.kdot_theta_at(s)
    tp_n = model.abs_theta_prime_at(s)
    f_tmid = np.sqrt((1 - t_mid[None, :] * kd_n[:, None]) ** 2 + (t_mid[None, :] * tp_n[:, None]) ** 2)
    P = idx[:, pt]
    Q = np.where(qt[None, :] >= 0, idx[:, np.maximum(qt, 0)], -1)
    K2 = _edge_matrix(N, P.ravel(), Q.ravel(), ((hs / ht) * f_tmid).ravel())

    f_node = np.sqrt((1 - t[None, :] * kd_n[:, None]) ** 2 + (t[None, :] * tp_n[:, None]) ** 2)
    mass = (f_node * hs * ht).ravel()
    K = (K1 + K2).tocsr()
    meta = {"kind": "strip_2d", "s_nodes": ns, "t_nodes": nt}
    return DiscreteForm(K, mass, end_condition, mesh, (ns, nt), meta, (K1, K2))


def assemble_straight_type(mesh: Mesh2D, potential=None, end_condition="dirichlet") -> DiscreteForm:
    """Form ``int |d_s phi|^2 + |d_t phi|^2 + V(s) |phi|^2`` on the straight rectangle.

    This is the transformed thin-strip comparison form (with ``t = a u``); ``V``
    is a callable of ``s`` or ``None``.
    """
    flat = StripModel.direct(mesh.a, _cover_grid(mesh.S))
    form = assemble_2d(flat, mesh, end_condition)
    if potential is None:
        return form
    s = mesh.s_nodes(end_condition)
    V = np.repeat(np.asarray(potential(s), dtype=float) * np.ones_like(s), mesh.nt)
    out = form.shifted(V)
    out.meta["kind"] = "straight_type_2d"
    return out


def _cover_grid(S: float):
    from .curves import SGrid

    return SGrid(-float(S), float(S), 3)


def transverse_mesh(a: float, nt: int) -> Mesh1D:
    return Mesh1D(-float(a), float(a), nt)


def assemble_transverse_1d(model: StripModel, s_index: int, nt: int, formulation: str = "weighted"):
    """Transverse problem at the node ``s_index`` on ``(-a, a)`` with Dirichlet ends.

    ``weighted``: ``int |psi'|^2 f`` over ``int |psi|^2 f``.
    ``potential``: ``int |phi'|^2 + V |phi|^2`` over ``int |phi|^2`` with
    ``V = b^2 (2 - t^2 b^2) / (4 f^4)``, ``b = |Theta'|``; needs ``k.Theta = 0`` there.
    """
    kd = float(model.kdotTheta[s_index])
    b = float(model.absThetaPrime[s_index])
    mesh = transverse_mesh(model.a, nt)
    t = mesh.nodes
    h = mesh.h
    edges_p, edges_q = _chain_edges(nt, True)
    t_mid = np.r_[-model.a + 0.5 * h, 0.5 * (t[:-1] + t[1:]), model.a - 0.5 * h]
    if formulation == "weighted":
        fm = np.sqrt((1 - t_mid * kd) ** 2 + (t_mid * b) ** 2)
        fn = np.sqrt((1 - t * kd) ** 2 + (t * b) ** 2)
        K = _edge_matrix(nt, edges_p, edges_q, fm / h)
        mass = fn * h
    elif formulation == "potential":
        if abs(kd) > 1e-12:
            raise ValueError(f"potential formulation needs k.Theta = 0 at node {s_index} (got {kd:.3g})")
        V = transverse_potential(t, b)
        K = _edge_matrix(nt, edges_p, edges_q, np.full(nt + 1, 1.0 / h)) + sp.diags(V * h)
        mass = np.full(nt, h)
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    meta = {"kind": "transverse_1d", "formulation": formulation, "s_index": int(s_index)}
    return DiscreteForm(K.tocsr(), mass, "dirichlet", mesh, (nt,), meta)


def transverse_potential(t, b):
    """``b^2 (2 - t^2 b^2) / (4 f^4)`` with ``f^2 = 1 + t^2 b^2``."""
    t = np.asarray(t, dtype=float)
    f2 = 1.0 + (t * b) ** 2
    return b * b * (2.0 - (t * b) ** 2) / (4.0 * f2 * f2)


def chain_laplacian(mesh: Mesh1D) -> sp.csr_matrix:
    """Stiffness of ``int |u'|^2`` on a Dirichlet 1D mesh (scaled by 1/h)."""
    p, q = _chain_edges(mesh.n, True)
    return _edge_matrix(mesh.n, p, q, np.full(p.size, 1.0 / mesh.h))


def discrete_threshold(a: float, nt: int) -> float:
    """Lowest eigenvalue of the discrete transverse Dirichlet Laplacian on ``(-a, a)``."""
    ht = 2.0 * a / (nt + 1)
    return 4.0 / ht**2 * np.sin(np.pi * ht / (4.0 * a)) ** 2


def discrete_chi1(a: float, nt: int) -> np.ndarray:
    """Discrete transverse ground mode at the interior nodes, unit ``ht``-weighted norm."""
    mesh = transverse_mesh(a, nt)
    v = np.cos(np.pi * mesh.nodes / (2.0 * a))
    return v / np.sqrt(mesh.h * (v @ v))


def averaged_va(model: StripModel, s, a_value: float, points: int = SURROGATE_POINTS):
    """Transverse average of ``V_a(s, .)`` against ``chi_1^2`` (Simpson, ``points`` nodes).

    Artifact surrogate for the projected thin-strip potential.
    """
    from scipy.integrate import simpson

    from .effective import va_table

    u = np.linspace(-1.0, 1.0, points)
    chi2 = np.cos(0.5 * np.pi * u) ** 2  # unit L2 norm on (-1, 1)
    table = va_table(model, np.asarray(s, dtype=float), u, a_value)
    return simpson(table * chi2[None, :], x=u, axis=1)


def assemble_effective_1d(model: StripModel, mesh_s: Mesh1D, which="V_eff", a_value=None):
    """1D form ``int |phi'|^2 + V |phi|^2`` with Dirichlet ends.

    ``which`` is ``"V_eff"`` or ``"V_a"``; the latter uses the t-averaged surrogate
    at half-width ``a_value``.
    """
    report = validate(model)
    if not report.flags["thin_ass_ok"]:
        raise AssumptionError("thin-strip boundedness assumptions fail", report)
    _check_window(model, mesh_s.lo, mesh_s.hi)
    s = mesh_s.nodes
    if which == "V_eff":
        V = -0.25 * model.kdot_theta_at(s) ** 2 + 0.5 * model.abs_theta_prime_at(s) ** 2
        meta = {"kind": "effective_1d", "potential": "V_eff"}
    elif which == "V_a":
        if a_value is None:
            raise ValueError("V_a needs a_value")
        _check_bound(model, a_value)
        V = averaged_va(model, s, a_value)
        meta = {"kind": "effective_1d", "potential": "V_a", "a": a_value,
                "surrogate": f"chi1-averaged V_a, Simpson {SURROGATE_POINTS} points"}
    else:
        raise ValueError(f"unknown potential {which!r}")
    K = chain_laplacian(mesh_s) + sp.diags(V * mesh_s.h)
    return DiscreteForm(K.tocsr(), np.full(mesh_s.n, mesh_s.h), "dirichlet", mesh_s, (mesh_s.n,), meta)
