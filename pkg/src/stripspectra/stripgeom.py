"""Strip geometry: twisting vector, the metric Jacobian, assumption checks, embedding.

A strip is determined (intrinsically) by the half-width ``a`` and two scalar
profiles along the reference curve: the geodesic curvature ``k.Theta`` and
``|Theta'|``. The metric Jacobian is

    f(s, t) = sqrt((1 - t k.Theta)^2 + t^2 |Theta'|^2).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.spatial import cKDTree

from ._numerics import bump, bump_prime
from .curves import SGrid
from .frames import Frame
from .io import atomic_write_text, to_json, write_table

HARDY_BOUND = np.sqrt(2.0)


class AssumptionError(ValueError):
    """Raised when a geometric hypothesis (e.g. ``a |k.Theta| < 1``) fails."""

    def __init__(self, message: str, report: "AssumptionReport | None" = None, nodes=None):
        super().__init__(message)
        self.report = report
        self.nodes = [] if nodes is None else list(nodes)


@dataclass(frozen=True)
class TwistProfile:
    """Unit twisting vector ``Theta`` and its derivative at the grid nodes."""

    grid: SGrid
    theta: np.ndarray = field(repr=False)
    theta_prime: np.ndarray = field(repr=False)

    def __post_init__(self):
        th = np.atleast_2d(np.asarray(self.theta, dtype=float))
        tp = np.atleast_2d(np.asarray(self.theta_prime, dtype=float))
        if th.shape[0] != self.grid.count:
            th = th.T if th.shape[1] == self.grid.count else th
        if tp.shape != th.shape:
            tp = tp.reshape(th.shape)
        if th.shape[0] != self.grid.count:
            raise ValueError("twist samples do not match grid")
        dev = np.max(np.abs(np.linalg.norm(th, axis=1) - 1.0))
        if dev > 1e-9:
            raise ValueError(f"twisting vector must have unit norm (deviation {dev:.2e})")
        th.setflags(write=False)
        tp.setflags(write=False)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "theta_prime", tp)

    @property
    def n(self) -> int:
        return self.theta.shape[1]

    @property
    def abs_theta_prime(self) -> np.ndarray:
        return np.linalg.norm(self.theta_prime, axis=1)

    @classmethod
    def constant(cls, grid: SGrid, theta) -> "TwistProfile":
        th = np.asarray(theta, dtype=float)
        th = th / np.linalg.norm(th)
        return cls(grid, np.tile(th, (grid.count, 1)), np.zeros((grid.count, th.size)))

    @classmethod
    def from_angle(cls, grid: SGrid, n: int, angle, rate, plane=(0, 1)) -> "TwistProfile":
        """Rotation by ``angle(s)`` inside the 2-plane of normal indices ``plane``."""
        i, j = plane
        if n < 2 or i == j or max(i, j) >= n:
            raise ValueError("a rotating twist needs n >= 2 and two distinct normal indices")
        angle = np.broadcast_to(np.asarray(angle, dtype=float), (grid.count,))
        rate = np.broadcast_to(np.asarray(rate, dtype=float), (grid.count,))
        th = np.zeros((grid.count, n))
        tp = np.zeros((grid.count, n))
        th[:, i], th[:, j] = np.cos(angle), np.sin(angle)
        tp[:, i], tp[:, j] = -rate * np.sin(angle), rate * np.cos(angle)
        return cls(grid, th, tp)

    @classmethod
    def rotating(cls, grid: SGrid, n: int, rate: float, phase: float = 0.0, plane=(0, 1)):
        """Constant-rate rotation ``angle = phase + rate * s``."""
        s = grid.nodes
        return cls.from_angle(grid, n, phase + rate * s, rate, plane)

    @classmethod
    def bump_rate(
        cls, grid: SGrid, n: int, height: float, width: float, center: float = 0.0, plane=(0, 1)
    ):
        """Rotation whose rate is a smooth compactly supported bump.

        ``rate(s) = height * bump((s - center) / (width / 2))``; the angle is its
        running integral (Simpson), starting from 0 at the first node.
        """
        s = grid.nodes
        rate = height * bump((s - center) / (0.5 * width))
        angle = cumulative_simpson(rate, dx=grid.ds, initial=0.0)
        return cls.from_angle(grid, n, angle, rate, plane)

    @classmethod
    def from_samples(cls, grid: SGrid, theta) -> "TwistProfile":
        """Sampled twist; renormalised node-wise, derivative by central differences."""
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        if th.shape[0] != grid.count:
            th = th.T
        norms = np.linalg.norm(th, axis=1)
        corr = np.max(np.abs(norms - 1.0))
        if corr > 1e-6:
            warnings.warn(f"twisting vector renormalised (max correction {corr:.2e})", stacklevel=2)
        th = th / norms[:, None]
        tp = np.gradient(th, grid.ds, axis=0, edge_order=2)
        return cls(grid, th, tp)


Profile = Callable[[np.ndarray], np.ndarray]


def _as_profile(value, grid: SGrid):
    """Return (node samples, callable or None) for a scalar/array/callable profile."""
    if callable(value):
        return np.asarray(value(grid.nodes), dtype=float), value
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        c = float(arr)
        return np.full(grid.count, c), (lambda s, c=c: np.full_like(np.asarray(s, dtype=float), c))
    if arr.shape != (grid.count,):
        raise ValueError("profile samples do not match grid")
    return arr, None


@dataclass(frozen=True)
class StripModel:
    """Intrinsic strip data: half-width and the profiles ``k.Theta``, ``|Theta'|``.

    Profiles are sampled at grid nodes. Off-node values come from the exact
    callables when the model was built from them, otherwise from linear
    interpolation of the samples.
    """

    a: float
    grid: SGrid
    kdotTheta: np.ndarray = field(repr=False)
    absThetaPrime: np.ndarray = field(repr=False)
    provenance: str = "direct_profiles"
    theta_second: np.ndarray | None = field(default=None, repr=False)
    kdot_fn: Profile | None = field(default=None, repr=False, compare=False)
    tp_fn: Profile | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"half-width must be positive, got {self.a}")
        if self.provenance not in ("from_frame_and_twist", "direct_profiles"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        for name in ("kdotTheta", "absThetaPrime"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.grid.count,):
                raise ValueError(f"{name} samples do not match grid")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        bad = np.nonzero(self.a * np.abs(self.kdotTheta) >= 1.0)[0]
        if bad.size:
            raise AssumptionError(
                f"a*|k.Theta| >= 1 at node {int(bad[0])} (s = {self.grid.nodes[bad[0]]:.6g}); "
                "the Jacobian would vanish",
                nodes=bad,
            )

    @classmethod
    def direct(cls, a: float, grid: SGrid, kdot_theta=0.0, abs_theta_prime=0.0) -> "StripModel":
        """Model from profiles given as scalars, node arrays or callables of ``s``."""
        kd, kfn = _as_profile(kdot_theta, grid)
        tp, tfn = _as_profile(abs_theta_prime, grid)
        return cls(float(a), grid, kd, np.abs(tp), "direct_profiles", None, kfn, tfn)

    def with_half_width(self, a: float) -> "StripModel":
        return StripModel(
            float(a), self.grid, self.kdotTheta, self.absThetaPrime, self.provenance,
            self.theta_second, self.kdot_fn, self.tp_fn,
        )

    # -- profile evaluation -------------------------------------------------
    @property
    def s_range(self) -> tuple[float, float]:
        return self.grid.s0, self.grid.end

    def covers(self, lo: float, hi: float) -> bool:
        eps = 1e-9 * max(1.0, abs(lo), abs(hi))
        return self.grid.s0 <= lo + eps and hi - eps <= self.grid.end

    def kdot_theta_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kdot_fn is not None:
            return np.asarray(self.kdot_fn(s), dtype=float) * np.ones_like(s)
        return np.interp(s, self.grid.nodes, self.kdotTheta)

    def abs_theta_prime_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.tp_fn is not None:
            return np.abs(np.asarray(self.tp_fn(s), dtype=float)) * np.ones_like(s)
        return np.interp(s, self.grid.nodes, self.absThetaPrime)

    def _derivative_at(self, fn, samples, s):
        s = np.asarray(s, dtype=float)
        if fn is not None:
            h = 1e-5
            return (np.asarray(fn(s + h)) - np.asarray(fn(s - h))) / (2 * h) * np.ones_like(s)
        d = np.gradient(samples, self.grid.ds, edge_order=2)
        return np.interp(s, self.grid.nodes, d)

    def kdot_theta_prime_at(self, s) -> np.ndarray:
        """``(k.Theta)'`` by differentiating the profile."""
        return self._derivative_at(self.kdot_fn, self.kdotTheta, s)

    def abs_theta_prime_deriv_at(self, s) -> np.ndarray:
        """``d|Theta'|/ds``."""
        if self.tp_fn is not None:
            fn = lambda x: np.abs(self.tp_fn(x))  # noqa: E731
            return self._derivative_at(fn, None, s)
        return self._derivative_at(None, self.absThetaPrime, s)

    @property
    def max_kdot(self) -> float:
        return float(np.max(np.abs(self.kdotTheta)))

    @property
    def max_theta_prime(self) -> float:
        return float(np.max(self.absThetaPrime))

    def f(self, s, t) -> np.ndarray:
        """Metric Jacobian at arbitrary (broadcast) ``s``, ``t``."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        return jacobian_from_profiles(self.kdot_theta_at(s), self.abs_theta_prime_at(s), t)

    @property
    def f_lower_bound(self) -> float:
        return 1.0 - self.a * self.max_kdot


def jacobian_from_profiles(kdot, tp, t) -> np.ndarray:
    return np.sqrt((1.0 - t * kdot) ** 2 + (t * tp) ** 2)


def make_strip(frame: Frame, twist: TwistProfile, a: float) -> StripModel:
    """Strip over ``frame`` with transverse direction ``N_Theta = sum Theta_j N_j``."""
    if frame.grid != twist.grid:
        raise ValueError("frame and twist grids differ")
    if frame.n != twist.n:
        raise ValueError(f"frame has {frame.n} normals but twist has {twist.n} components")
    if not a > 0:
        raise ValueError("half-width must be positive")
    kd = np.einsum("ij,ij->i", frame.k.k, twist.theta)
    tp = twist.abs_theta_prime
    tpp = np.linalg.norm(np.gradient(twist.theta_prime, twist.grid.ds, axis=0, edge_order=2), axis=1)
    return StripModel(float(a), frame.grid, kd, tp, "from_frame_and_twist", tpp)


def _check_t(model: StripModel, t: float) -> None:
    if abs(t) > model.a * (1 + 1e-12):
        raise ValueError(f"|t| = {abs(t)} exceeds the half-width {model.a}")


def jacobian_f(model: StripModel, s_index: int, t: float) -> float:
    _check_t(model, t)
    return float(
        jacobian_from_profiles(model.kdotTheta[s_index], model.absThetaPrime[s_index], t)
    )


def gauss_curvature(model: StripModel, s_index: int, t: float) -> float:
    """Gauss curvature ``-|Theta'|^2 / f^4`` of the strip surface."""
    f = jacobian_f(model, s_index, t)
    return float(-model.absThetaPrime[s_index] ** 2 / f**4)


# -- assumptions ---------------------------------------------------------------
@dataclass
class AssumptionReport:
    flags: dict
    witnesses: dict
    values: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        violated = [k for k, v in self.flags.items() if not v]
        return {"ok": self.ok, "violated": violated, "flags": self.flags,
                "witnesses": self.witnesses, "values": self.values}

    def write_json(self, path) -> None:
        atomic_write_text(path, to_json(self.to_dict()) + "\n")


def validate(model: StripModel, flat_threshold: float = 1e-3, thin_bound: float = 1e6,
             a: float | None = None):
    """Evaluate every geometric hypothesis flag from the model samples.

    ``a`` overrides the model's half-width, which lets a report be produced for
    widths the model itself refuses to carry.
    """
    a = model.a if a is None else float(a)
    kd = model.kdotTheta
    tp = model.absThetaPrime
    s = model.grid.nodes
    flags, wit = {}, {}

    bad = np.nonzero(a * np.abs(kd) >= 1.0)[0]
    flags["ass21_ok"] = bad.size == 0
    wit["ass21_ok"] = bad.tolist()

    bad = np.nonzero(a * tp > HARDY_BOUND * (1 + 1e-12))[0]
    flags["hardy_smallness_ok"] = bad.size == 0
    wit["hardy_smallness_ok"] = bad.tolist()

    count = model.grid.count
    m = max(1, int(np.ceil(0.1 * count)))
    outer = np.r_[np.arange(m), np.arange(count - m, count)]
    worst = np.maximum(np.abs(kd[outer]), tp[outer])
    bad = outer[worst >= flat_threshold]
    flags["asymptotically_flat_ok"] = bad.size == 0
    wit["asymptotically_flat_ok"] = sorted(set(bad.tolist()))

    dkd = model.kdot_theta_prime_at(s)
    if model.theta_second is not None:
        tpp = model.theta_second
    else:
        tpp = np.abs(model.abs_theta_prime_deriv_at(s))
    quantities = np.vstack([np.abs(kd), np.abs(dkd), tp, tpp])
    bad_mask = ~np.isfinite(quantities) | (quantities > thin_bound)
    bad = np.nonzero(bad_mask.any(axis=0))[0]
    flags["thin_ass_ok"] = bool(bad.size == 0 and flags["ass21_ok"])
    wit["thin_ass_ok"] = bad.tolist()

    values = {
        "a": a,
        "a_max_kdotTheta": a * float(np.max(np.abs(kd))),
        "a_max_abs_theta_prime": a * float(np.max(tp)),
        "outer_window_max": float(np.max(worst)),
        "sup_kdotTheta_prime": float(np.max(np.abs(dkd))),
        "sup_abs_theta_second": float(np.max(tpp)),
    }
    return AssumptionReport(flags, wit, values)


# -- embedding -----------------------------------------------------------------
@dataclass(frozen=True)
class SurfaceSamples:
    """Embedded lattice ``L(s_i, t_m)`` with its parameter tags."""

    s: np.ndarray
    t: np.ndarray
    points: np.ndarray  # (count, t_samples, dim)
    triangles: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.points.shape[-1]

    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, self.dim)

    def flat_params(self) -> np.ndarray:
        S, T = np.meshgrid(self.s, self.t, indexing="ij")
        return np.column_stack([S.ravel(), T.ravel()])

    def write_csv(self, path) -> None:
        header = ["s", "t"] + [f"x{d}" for d in range(self.dim)]
        write_table(path, header, np.hstack([self.flat_params(), self.flat_points()]))

    def write_obj(self, path) -> None:
        if self.triangles is None:
            raise ValueError("OBJ export needs a triangulated surface (dim = 3)")
        lines = ["# strip surface"]
        lines += ["v {:.17g} {:.17g} {:.17g}".format(*p) for p in self.flat_points()]
        lines += ["f {} {} {}".format(*(tri + 1)) for tri in self.triangles]
        atomic_write_text(path, "\n".join(lines) + "\n")


def embed(model: StripModel, frame: Frame, twist: TwistProfile, t_samples: int, curve=None):
    """Sample ``L(s,t) = Gamma(s) + t N_Theta(s)`` on the node x uniform-t lattice.

    ``curve`` supplies Gamma; when omitted the curve is recovered by integrating
    ``T`` (trapezoid rule) from the origin.
    """
    if frame.grid != twist.grid or frame.grid != model.grid:
        raise ValueError("model, frame and twist grids differ")
    if t_samples < 2:
        raise ValueError("need at least 2 transverse samples")
    if curve is not None:
        gamma = curve.points
    else:
        T = frame.T
        gamma = np.vstack([np.zeros(frame.dim), np.cumsum(0.5 * (T[1:] + T[:-1]), axis=0) * frame.grid.ds])
    NTheta = np.einsum("ij,ijd->id", twist.theta, frame.N)
    t = np.linspace(-model.a, model.a, t_samples)
    pts = gamma[:, None, :] + t[None, :, None] * NTheta[:, None, :]
    tris = None
    if frame.dim == 3:
        count = frame.grid.count
        idx = np.arange(count * t_samples).reshape(count, t_samples)
        v00, v01 = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
        v10, v11 = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
        tris = np.vstack([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])
    return SurfaceSamples(frame.grid.nodes, t, pts, tris)


@dataclass
class InjectivityReport:
    flagged_pairs: np.ndarray
    min_distance: float

    @property
    def ok(self) -> bool:
        return len(self.flagged_pairs) == 0

    def to_dict(self, params=None) -> dict:
        out = {"ok": self.ok, "n_flagged": int(len(self.flagged_pairs)), "min_distance": self.min_distance}
        if params is not None and len(self.flagged_pairs):
            out["flagged_params"] = params[self.flagged_pairs[:50]].tolist()
        return out


def check_injectivity(surface: SurfaceSamples, min_separation: float, param_gap: float | None = None):
    """Flag parameter-distant sample pairs that lie closer than ``min_separation``.

    Two samples are parameter-distant when their (s, t) distance exceeds
    ``param_gap`` (default ``10 * min_separation``).
    """
    gap = 10.0 * min_separation if param_gap is None else param_gap
    pts = surface.flat_points()
    par = surface.flat_params()
    tree = cKDTree(pts)
    pairs = tree.query_pairs(min_separation, output_type="ndarray")
    if len(pairs):
        pdist = np.linalg.norm(par[pairs[:, 0]] - par[pairs[:, 1]], axis=1)
        pairs = pairs[pdist > gap]
    if len(pairs):
        dmin = float(np.min(np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)))
    else:
        dmin = float("inf")
    return InjectivityReport(pairs, dmin)


def centerline_geodesic_curvature(surface: SurfaceSamples) -> np.ndarray:
    """Geodesic curvature of the ``t = 0`` line computed from embedded points only.

    Needs an odd number of transverse samples (so ``t = 0`` is sampled).
    """
    nt = surface.t.size
    if nt % 2 == 0 or nt < 3:
        raise ValueError("need an odd number (>= 3) of transverse samples")
    c = nt // 2
    ds = surface.s[1] - surface.s[0]
    dt = surface.t[c + 1] - surface.t[c]
    gamma = surface.points[:, c, :]
    d1 = np.gradient(gamma, ds, axis=0, edge_order=2)
    d2 = np.gradient(d1, ds, axis=0, edge_order=2)
    transverse = (surface.points[:, c + 1, :] - surface.points[:, c - 1, :]) / (2 * dt)
    transverse /= np.linalg.norm(transverse, axis=1)[:, None]
    speed = np.linalg.norm(d1, axis=1)
    return np.einsum("id,id->i", d2, transverse) / speed**2


def smooth_bump_profile(height: float, width: float, center: float = 0.0):
    """Callable ``height * bump((s - center)/(width/2))`` and its derivative."""
    half = 0.5 * width

    def fn(s):
        return height * bump((np.asarray(s, dtype=float) - center) / half)

    def dfn(s):
        return height / half * bump_prime((np.asarray(s, dtype=float) - center) / half)

    return fn, dfn
