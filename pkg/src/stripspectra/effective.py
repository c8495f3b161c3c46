"""Effective one-dimensional objects: the transverse gap profile lambda(s),
the geometric potential V_eff, and the thin-strip transformed coefficients.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._numerics import richardson
from .curves import SGrid
from .discretize import (
    DiscreteForm,
    Mesh2D,
    assemble_straight_type,
    assemble_transverse_1d,
    discrete_chi1,
    discrete_threshold,
)
from .eigensolve import smallest_eigs, solve_shifted
from .io import write_table
from .stripgeom import HARDY_BOUND, AssumptionError, StripModel, validate


def threshold(a: float) -> float:
    """First transverse Dirichlet eigenvalue ``(pi / 2a)^2``."""
    return (np.pi / (2.0 * a)) ** 2


def transverse_energy(a: float, j: int) -> float:
    return (j * np.pi / (2.0 * a)) ** 2


# -- lambda(s) ---------------------------------------------------------------------
@dataclass
class LambdaProfile:
    grid: SGrid
    lam: np.ndarray
    mesh_nt: int
    extrapolated: bool
    formulation: str = "weighted"

    def to_csv(self, path) -> None:
        write_table(path, ["s", "lambda"], np.column_stack([self.grid.nodes, self.lam]))


def _gap_at(model: StripModel, i: int, nt: int, formulation: str) -> float:
    form = assemble_transverse_1d(model, i, nt, formulation)
    mu = smallest_eigs(form, 1, method="tridiagonal").eigenvalues[0]
    return float(mu - discrete_threshold(model.a, nt))


def lambda_at(model: StripModel, i: int, nt: int, formulation: str = "weighted",
              extrapolate: bool = True) -> float:
    """``lambda(s_i)`` = lowest transverse eigenvalue minus the threshold.

    The discrete threshold of the same chain is subtracted so that the
    untwisted value is zero to round-off; with ``extrapolate`` the result is
    Richardson-combined over ``nt`` and the nested ``2 nt + 1``.
    """
    coarse = _gap_at(model, i, nt, formulation)
    if not extrapolate:
        return coarse
    fine = _gap_at(model, i, 2 * nt + 1, formulation)
    return richardson(coarse, fine, 2.0, 2.0)


def lambda_profile(model: StripModel, nt: int = 200, use_potential_form: bool = False,
                   extrapolate: bool = True, threads: int | None = None, nodes=None) -> LambdaProfile:
    """Evaluate lambda at every grid node (or at the node indices ``nodes``)."""
    formulation = "potential" if use_potential_form else "weighted"
    if use_potential_form and np.max(np.abs(model.kdotTheta)) > 1e-12:
        raise ValueError("the potential formulation needs k.Theta = 0 on the whole window")
    idx = np.arange(model.grid.count) if nodes is None else np.asarray(nodes)
    lam = np.zeros(model.grid.count)
    zero = model.absThetaPrime[idx] == 0.0
    if use_potential_form:
        work = idx
    else:
        # f = 1 exactly at untwisted, unbent nodes: the gap vanishes identically
        work = idx[~(zero & (model.kdotTheta[idx] == 0.0))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        vals = list(pool.map(lambda i: lambda_at(model, int(i), nt, formulation, extrapolate), work))
    lam[work] = vals
    return LambdaProfile(model.grid, lam, nt, extrapolate, formulation)


@dataclass
class HardyFloor:
    grid: SGrid
    floor: np.ndarray
    minimum: float
    maximum: float
    support: list
    positivity_claimed: bool
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"minimum": self.minimum, "maximum": self.maximum, "support": self.support,
                "positivity_claimed": self.positivity_claimed, "flags": self.flags}


def _intervals(s: np.ndarray, mask: np.ndarray) -> list:
    out, start = [], None
    for i, on in enumerate(mask):
        if on and start is None:
            start = i
        if not on and start is not None:
            out.append([float(s[start]), float(s[i - 1])])
            start = None
    if start is not None:
        out.append([float(s[start]), float(s[-1])])
    return out


def local_hardy_floor(model: StripModel, profile: LambdaProfile, tol: float = 1e-8) -> HardyFloor:
    """Package lambda as the lower-bound potential ``H - E_1 >= lambda``.

    Positivity is only claimed when ``a max|Theta'| <= sqrt 2``; above that the
    transverse potential turns negative near the edges and a flag is raised.
    """
    if np.max(np.abs(model.kdotTheta)) > 1e-12:
        raise ValueError("the local Hardy floor needs an unbent model")
    a_tp = model.a * model.max_theta_prime
    claimed = bool(a_tp <= HARDY_BOUND * (1 + 1e-12))
    flags = {"hardy_smallness_ok": claimed, "potential_negative_near_edges": not claimed}
    lam = profile.lam
    return HardyFloor(
        profile.grid, lam.copy(), float(lam.min()), float(lam.max()),
        _intervals(profile.grid.nodes, lam > tol), claimed, flags,
    )


# -- V_eff -------------------------------------------------------------------------
@dataclass
class EffectivePotential:
    grid: SGrid
    v_eff: np.ndarray
    z0: float

    def to_csv(self, path) -> None:
        write_table(path, ["s", "v_eff"], np.column_stack([self.grid.nodes, self.v_eff]))


def v_eff_formula(kdot, tp):
    return -0.25 * np.asarray(kdot) ** 2 + 0.5 * np.asarray(tp) ** 2


def effective_potential(model: StripModel) -> EffectivePotential:
    """``V_eff = -(k.Theta)^2 / 4 + |Theta'|^2 / 2`` and the floor ``z0 = -max(k.Theta)^2 / 4``."""
    v = v_eff_formula(model.kdotTheta, model.absThetaPrime)
    z0 = -0.25 * float(np.max(np.abs(model.kdotTheta))) ** 2
    return EffectivePotential(model.grid, v, z0)


# -- thin-strip transform --------------------------------------------------------------
def _f_and_t_derivatives(kd, tp, t):
    F = (1.0 - t * kd) ** 2 + (t * tp) ** 2
    Ft = -2.0 * kd * (1.0 - t * kd) + 2.0 * t * tp**2
    Ftt = 2.0 * kd**2 + 2.0 * tp**2
    f = np.sqrt(F)
    ft = Ft / (2.0 * f)
    ftt = Ftt / (2.0 * f) - Ft**2 / (4.0 * f**3)
    return f, ft, ftt


def va_formula(kd, tp, t):
    """``-(d_t f)^2 / (4 f^2) + d_t^2 f / (2 f)`` from the closed form of ``f``."""
    f, ft, ftt = _f_and_t_derivatives(kd, tp, t)
    return -(ft**2) / (4.0 * f**2) + ftt / (2.0 * f)


def va_table(model: StripModel, s, u, a_value: float) -> np.ndarray:
    """``V_a`` on the lattice ``s x u`` (shape ``(len(s), len(u))``)."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    kd = model.kdot_theta_at(s)[:, None]
    tp = model.abs_theta_prime_at(s)[:, None]
    return va_formula(kd, tp, a_value * u[None, :])


@dataclass
class ThinTransform:
    s: np.ndarray
    u: np.ndarray
    a: float
    f_a: np.ndarray
    d1f_a: np.ndarray
    v_a: np.ndarray
    v_eff: np.ndarray
    deviations: dict

    def to_csv(self, path) -> None:
        S, U = np.meshgrid(self.s, self.u, indexing="ij")
        rows = np.column_stack([S.ravel(), U.ravel(), self.f_a.ravel(), self.v_a.ravel()])
        write_table(path, ["s", "u", "f_a", "v_a"], rows)


def thin_transform_data(model: StripModel, a_value: float, u_points: int = 129, s=None) -> ThinTransform:
    """Tabulate ``f_a``, ``d_1 f_a`` and ``V_a`` on an ``(s, u)`` lattice with ``u in [-1, 1]``.

    Also reports the sup-norm deviations ``|f_a - 1|``, ``|d_1 f_a|`` and
    ``|V_a - V_eff|`` that control the thin-strip limit.
    """
    if a_value * model.max_kdot >= 1.0:
        raise AssumptionError(f"a*max|k.Theta| = {a_value * model.max_kdot:.6g} >= 1")
    report = validate(model.with_half_width(a_value))
    if not report.flags["thin_ass_ok"]:
        raise AssumptionError("thin-strip boundedness assumptions fail", report)
    s = model.grid.nodes if s is None else np.asarray(s, dtype=float)
    u = np.linspace(-1.0, 1.0, u_points)
    kd = model.kdot_theta_at(s)[:, None]
    tp = model.abs_theta_prime_at(s)[:, None]
    dkd = model.kdot_theta_prime_at(s)[:, None]
    dtp = model.abs_theta_prime_deriv_at(s)[:, None]
    t = a_value * u[None, :]
    f, ft, ftt = _f_and_t_derivatives(kd, tp, t)
    d1f = ((1.0 - t * kd) * (-t * dkd) + t * t * tp * dtp) / f
    va = -(ft**2) / (4.0 * f**2) + ftt / (2.0 * f)
    ve = v_eff_formula(kd, tp)
    dev = {
        "f_a_minus_1": float(np.max(np.abs(f - 1.0))),
        "d1_f_a": float(np.max(np.abs(d1f))),
        "v_a_minus_v_eff": float(np.max(np.abs(va - ve))),
    }
    return ThinTransform(s, u, a_value, f, d1f, va, ve[:, 0], dev)


# -- projection defect ---------------------------------------------------------------
@dataclass
class DefectReport:
    ratio: float
    bound_derived: float
    bound_printed: float
    bound_discrete: float
    a: float
    z: float
    z0: float

    @property
    def ok(self) -> bool:
        return self.ratio <= self.bound_derived

    def to_dict(self) -> dict:
        return {"ratio": self.ratio, "bound_derived": self.bound_derived,
                "bound_printed": self.bound_printed, "bound_discrete": self.bound_discrete,
                "a": self.a, "z": self.z, "z0": self.z0, "ok": self.ok}


def transformed_form(model: StripModel, a_value: float, S: float, ns: int, nt: int) -> DiscreteForm:
    """Comparison form ``int |d_s|^2 + |d_t|^2 + V_eff(s)`` on ``(-S,S) x (-a,a)``.

    Equivalent to the ``(s, u)`` form with ``a^{-2} |d_u|^2`` after ``t = a u``.
    """
    ep = effective_potential(model)
    pot = lambda x: v_eff_formula(model.kdot_theta_at(x), model.abs_theta_prime_at(x))  # noqa: E731
    form = assemble_straight_type(Mesh2D(S, a_value, ns, nt), pot)
    form.meta.update({"kind": "transformed_straight_type", "z0": ep.z0})
    return form


def transverse_projection(form: DiscreteForm, F: np.ndarray) -> np.ndarray:
    """``P F``: component along the discrete ground mode in ``t`` at each s-node."""
    ns, nt = form.shape
    chi = discrete_chi1(form.mesh.a, nt)
    F2 = F.reshape(ns, nt)
    coef = F2 @ chi * form.mesh.ht
    return np.outer(coef, chi).ravel()


def projection_defect(form0: DiscreteForm, a_value: float, z: float, rhs, z0: float | None = None,
                      tol: float = 1e-11) -> DefectReport:
    """Ratio ``|P_perp psi| / |P_perp F|`` for ``(H0 - E_1 - z) psi = P_perp F``.

    Norms are the discrete weighted L2 norms; ``E_1`` is the discrete threshold
    of the transverse chain (so ``P`` commutes exactly with the discrete form).
    """
    z0 = form0.meta.get("z0") if z0 is None else z0
    if z0 is None:
        raise ValueError("z0 unknown: build the form with transformed_form or pass z0")
    if z >= z0:
        raise ValueError(f"z = {z} must lie below z0 = {z0}")
    nt = form0.shape[1]
    e1h = discrete_threshold(a_value, nt)
    e2h = 4.0 / form0.mesh.ht**2 * np.sin(2 * np.pi * form0.mesh.ht / (4.0 * a_value)) ** 2
    F = np.asarray(rhs, dtype=float)
    Fp = F - transverse_projection(form0, F)
    nF = np.sqrt(Fp @ (form0.mass * Fp))
    bound = 4.0 * a_value**2 / (3.0 * np.pi**2)
    printed = a_value**2 / (3.0 * np.pi**2)
    discrete = 1.0 / (e2h - e1h + (z0 - z))
    if nF == 0.0:
        return DefectReport(0.0, bound, printed, discrete, a_value, z, z0)
    psi = solve_shifted(form0, e1h + z, form0.mass * Fp, tol=tol, preconditioner="fastdiag")
    pp = psi - transverse_projection(form0, psi)
    ratio = float(np.sqrt(pp @ (form0.mass * pp)) / nF)
    return DefectReport(ratio, bound, printed, discrete, a_value, z, z0)
