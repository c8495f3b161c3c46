"""End-to-end numerical studies with pass/fail verdicts.

Each study takes a :class:`StudyConfig` (model spec, mesh ladder, solver
settings, study parameters) and returns a :class:`Verdict` whose ``data``
tables back the decision. Models are described by small JSON-able specs, see
:func:`build_model`.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from ._numerics import (
    modified_gram_schmidt,
    bump,
    bump_prime,
    plateau,
    plateau_prime,
    richardson,
    smoothstep,
    smoothstep_prime,
)
from .curves import SGrid, make_analytic_curve
from .discretize import (
    DiscreteForm,
    Mesh1D,
    Mesh2D,
    assemble_2d,
    assemble_effective_1d,
    discrete_chi1,
    discrete_threshold,
)
from .effective import (
    effective_potential,
    lambda_profile,
    local_hardy_floor,
    projection_defect,
    thin_transform_data,
    threshold,
    transformed_form,
)
from .eigensolve import dense_eigs, lobpcg, smallest_eigs, solve_shifted
from .frames import build_rpaf
from .io import atomic_write_text, to_json, write_dat, write_json, write_table
from .stripgeom import HARDY_BOUND, AssumptionError, StripModel, TwistProfile, make_strip, validate

log = logging.getLogger(__name__)


# -- model specs ---------------------------------------------------------------------
def profile_from_spec(spec):
    """Return ``(fn, dfn)`` for a profile spec.

    Specs: a number (constant), ``{"type": "zero"}``, ``{"type": "constant", "value"}``,
    ``{"type": "bump", "height", "width", "center"}`` (smooth, supported on
    ``center +- width/2``), ``{"type": "decay", "eps"}`` (``eps / (1 + s^2)``) and
    ``{"type": "sum", "terms": [...]}``.
    """
    if spec is None:
        spec = {"type": "zero"}
    if isinstance(spec, (int, float)):
        spec = {"type": "constant", "value": float(spec)}
    if not isinstance(spec, dict) or "type" not in spec:
        raise ValueError(f"bad profile spec {spec!r}")
    kind = spec["type"]
    allowed = {
        "zero": set(), "constant": {"value"}, "bump": {"height", "width", "center"},
        "decay": {"eps"}, "sum": {"terms"},
    }
    if kind not in allowed:
        raise ValueError(f"unknown profile type {kind!r}")
    extra = set(spec) - allowed[kind] - {"type"}
    if extra:
        raise ValueError(f"unknown keys {sorted(extra)} in {kind} profile")
    if kind == "zero":
        return (lambda s: np.zeros_like(np.asarray(s, dtype=float))), (
            lambda s: np.zeros_like(np.asarray(s, dtype=float)))
    if kind == "constant":
        c = float(spec["value"])
        return (lambda s: np.full_like(np.asarray(s, dtype=float), c)), (
            lambda s: np.zeros_like(np.asarray(s, dtype=float)))
    if kind == "bump":
        h = float(spec["height"])
        half = 0.5 * float(spec["width"])
        c = float(spec.get("center", 0.0))
        return (lambda s: h * bump((np.asarray(s, dtype=float) - c) / half)), (
            lambda s: h / half * bump_prime((np.asarray(s, dtype=float) - c) / half))
    if kind == "decay":
        e = float(spec["eps"])
        return (lambda s: e / (1.0 + np.asarray(s, dtype=float) ** 2)), (
            lambda s: -2.0 * e * np.asarray(s, dtype=float) / (1.0 + np.asarray(s, dtype=float) ** 2) ** 2)
    parts = [profile_from_spec(t) for t in spec["terms"]]
    return (lambda s: sum(p[0](s) for p in parts)), (lambda s: sum(p[1](s) for p in parts))


def profile_support(spec) -> tuple[float, float] | None:
    """Support interval of a compactly supported profile (``None`` if not compact)."""
    if spec is None or isinstance(spec, (int, float)) and float(spec) == 0.0:
        return (0.0, 0.0)
    if isinstance(spec, (int, float)):
        return None
    kind = spec["type"]
    if kind == "zero":
        return (0.0, 0.0)
    if kind == "bump":
        c = float(spec.get("center", 0.0))
        half = 0.5 * float(spec["width"])
        return (c - half, c + half)
    if kind == "sum":
        sups = [profile_support(t) for t in spec["terms"]]
        if any(s is None for s in sups):
            return None
        return (min(s[0] for s in sups), max(s[1] for s in sups))
    return None


MODEL_KEYS = {"a", "kdot", "theta_prime", "window", "ds", "curve", "twist"}


@dataclass
class Geometry:
    model: StripModel
    curve: object = None
    frame: object = None
    twist: object = None


def _window_grid(spec: dict) -> SGrid:
    lo, hi = spec.get("window", [-10.0, 10.0])
    return SGrid.spanning(float(lo), float(hi), float(spec.get("ds", 0.01)))


def build_geometry(spec: dict) -> Geometry:
    """Model from a spec: direct profiles (``kdot``, ``theta_prime``) or ``curve`` + ``twist``."""
    extra = set(spec) - MODEL_KEYS
    if extra:
        raise ValueError(f"unknown model keys {sorted(extra)}")
    if "a" not in spec:
        raise ValueError("model spec needs the half-width 'a'")
    a = float(spec["a"])
    grid = _window_grid(spec)
    if "curve" in spec:
        if "kdot" in spec or "theta_prime" in spec:
            raise ValueError("give either direct profiles or curve + twist, not both")
        c = dict(spec["curve"])
        bad = set(c) - {"family", "params", "dim"}
        if bad:
            raise ValueError(f"unknown curve keys {sorted(bad)}")
        dim = int(c.get("dim", 3))
        curve = make_analytic_curve(c["family"], c.get("params", {}), dim, grid)
        normals = complete_normals(curve.tangents[0])
        frame = build_rpaf(curve, normals)
        twist = twist_from_spec(spec.get("twist", {"type": "constant"}), grid, dim - 1)
        model = make_strip(frame, twist, a)
        return Geometry(model, curve, frame, twist)
    kfn, _ = profile_from_spec(spec.get("kdot"))
    tfn, _ = profile_from_spec(spec.get("theta_prime"))
    return Geometry(StripModel.direct(a, grid, kfn, tfn))


def complete_normals(T0) -> np.ndarray:
    """Orthonormal rows spanning the complement of the unit vector ``T0``."""
    dim = T0.size
    order = np.argsort(np.abs(T0))  # least aligned axes first
    rows = modified_gram_schmidt(np.vstack([T0, np.eye(dim)[order[: dim - 1]]]))
    return rows[1:]


def twist_from_spec(spec: dict, grid: SGrid, n: int) -> TwistProfile:
    kind = spec.get("type", "constant")
    if kind == "constant":
        theta = spec.get("theta")
        theta = np.eye(n)[0] if theta is None else np.asarray(theta, dtype=float)
        return TwistProfile.constant(grid, theta)
    plane = tuple(spec.get("plane", (0, 1)))
    if kind == "rotating":
        return TwistProfile.rotating(grid, n, float(spec["rate"]), float(spec.get("phase", 0.0)), plane)
    if kind == "bump_rate":
        return TwistProfile.bump_rate(grid, n, float(spec["height"]), float(spec["width"]),
                                      float(spec.get("center", 0.0)), plane)
    raise ValueError(f"unknown twist type {kind!r}")


def build_model(spec: dict) -> StripModel:
    return build_geometry(spec).model


def assumption_report(spec: dict, **kwargs):
    """AssumptionReport for a spec, including widths the model itself rejects."""
    try:
        return validate(build_model(spec), **kwargs)
    except AssumptionError:
        shrunk = dict(spec, a=1e-9)
        return validate(build_model(shrunk), a=float(spec["a"]), **kwargs)


# -- configs and verdicts -----------------------------------------------------------
@dataclass
class StudyConfig:
    model: dict
    ladder: list = field(default_factory=list)
    tol: float = 1e-9
    seed: int = 0
    params: dict = field(default_factory=dict)
    threads: int | None = None

    def meshes(self, a: float | None = None) -> list[Mesh2D]:
        a = float(self.model["a"]) if a is None else a
        return [Mesh2D(float(S), a, int(ns), int(nt)) for S, ns, nt in self.ladder]

    def check_ladder(self) -> None:
        ms = self.meshes()
        for prev, cur in zip(ms, ms[1:]):
            if cur.hs > prev.hs * (1 + 1e-12) or cur.ht > prev.ht * (1 + 1e-12):
                raise ValueError("mesh ladder must be refining")
            if cur.hs >= prev.hs * (1 - 1e-12) and cur.ht >= prev.ht * (1 - 1e-12):
                raise ValueError("mesh ladder must be strictly refining")


@dataclass
class Verdict:
    claim: str
    passed: bool
    margin: float
    data: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"claim": self.claim, "passed": self.passed, "margin": self.margin,
                "summary": self.summary, "tables": sorted(self.data)}

    def line(self) -> str:
        return f"{self.claim}: {'PASS' if self.passed else 'FAIL'} (margin {self.margin:.6g})"

    def write(self, outdir) -> list[Path]:
        """Verdict JSON, one CSV (and gnuplot ``.dat``) per table and a text summary."""
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        p = out / f"{self.claim}_verdict.json"
        write_json(p, self.to_dict())
        written.append(p)
        for name, table in self.data.items():
            cols = list(table)
            rows = np.column_stack([np.asarray(table[c], dtype=float) for c in cols])
            p = out / f"{self.claim}_{name}.csv"
            write_table(p, cols, rows)
            written.append(p)
            p = out / f"{self.claim}_{name}.dat"
            write_dat(p, table)
            written.append(p)
        p = out / f"{self.claim}_summary.txt"
        lines = [self.line()] + [f"  {k} = {v}" for k, v in self.summary.items()]
        atomic_write_text(p, "\n".join(lines) + "\n")
        written.append(p)
        return written


def _pmap(fn, items, threads):
    items = list(items)
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _lowest(form: DiscreteForm, tol: float, seed: int, m: int = 1) -> float:
    return smallest_eigs(form, m, tol, seed).eigenvalues


def straight_exact(mesh: Mesh2D, end_condition: str = "dirichlet") -> tuple[float, float]:
    """(continuum, discrete) lowest eigenvalue of the straight strip on ``mesh``."""
    cont = threshold(mesh.a) + (np.pi / (2 * mesh.S)) ** 2
    disc = discrete_threshold(mesh.a, mesh.nt)
    if end_condition == "dirichlet":
        disc += 4.0 / mesh.hs**2 * np.sin(np.pi * mesh.hs / (4.0 * mesh.S)) ** 2
    else:
        cont = threshold(mesh.a)
    return cont, disc


# -- straight strip ---------------------------------------------------------------------
def straight_strip_convergence(config: StudyConfig) -> Verdict:
    """Lowest Dirichlet eigenvalue of the straight strip along the ladder."""
    config.check_ladder()
    model = build_model(config.model)
    meshes = config.meshes()
    lam = _pmap(lambda m: float(_lowest(assemble_2d(model, m), config.tol, config.seed)[0]),
                meshes, config.threads)
    exact = np.array([straight_exact(m)[0] for m in meshes])
    err = np.abs(np.array(lam) - exact)
    rel = err / exact
    ratios = err[:-1] / err[1:]
    lo, hi = config.params.get("ratio_window", (3.5, 4.5))
    rel_tol = config.params.get("rel_tol", 1e-3)
    ok = bool(rel[-1] <= rel_tol and np.all((ratios >= lo) & (ratios <= hi)))
    data = {"ladder": {"ns": [m.ns for m in meshes], "nt": [m.nt for m in meshes],
                       "lambda1": lam, "exact": exact, "rel_error": rel}}
    summary = {"finest_rel_error": float(rel[-1]), "ratios": ratios.tolist(),
               "finest_abs_error": float(err[-1])}
    return Verdict("straight_strip", ok, float(rel_tol - rel[-1]), data, summary)


# -- bent strips -------------------------------------------------------------------------
def _trial_pieces(model: StripModel, n: int, eta_spec, mollifier: str, t_points: int, ds: float):
    """Quadratic pieces ``(h1[A], h1(A, B), h1[B])`` of ``h1[A + eps B]``.

    ``A = phi_n chi_1`` and ``B = eta t chi_1``; composite Simpson on analytic
    integrands in both variables.
    """
    a = model.a
    E1 = threshold(a)
    eta, deta = profile_from_spec(eta_spec)
    sup = profile_support(eta_spec)
    if sup is None:
        raise ValueError("eta must be compactly supported")
    if not model.covers(*sup):
        raise ValueError("eta support exceeds the model window")
    if mollifier == "plateau":
        phi1, dphi1, reach = plateau, plateau_prime, 2.0
    elif mollifier == "bump":
        phi1, dphi1, reach = bump, bump_prime, 1.0
    else:
        raise ValueError(f"unknown mollifier {mollifier!r}")
    lo = min(-reach * n, sup[0])
    hi = max(reach * n, sup[1])
    count = int(np.ceil((hi - lo) / ds)) + 1
    count += 1 - count % 2
    s = np.linspace(lo, hi, count)
    t = np.linspace(-a, a, t_points if t_points % 2 else t_points + 1)
    S, T = np.meshgrid(s, t, indexing="ij")
    f = model.f(S, T)
    k = np.pi / (2 * a)
    chi = np.cos(k * t) / np.sqrt(a)
    dchi = -k * np.sin(k * t) / np.sqrt(a)
    phi = phi1(s / n)
    dphi = dphi1(s / n) / n
    e = eta(s)
    de = deta(s)
    A_s, A_t, A = dphi[:, None] * chi, phi[:, None] * dchi, phi[:, None] * chi
    B_s = de[:, None] * (t * chi)
    B_t = e[:, None] * (chi + t * dchi)
    B = e[:, None] * (t * chi)

    def form(us, ut, u, vs, vt, v):
        integrand = us * vs / f + ut * vt * f - E1 * u * v * f
        return float(simpson(simpson(integrand, x=t, axis=1), x=s))

    hA = form(A_s, A_t, A, A_s, A_t, A)
    hAB = form(A_s, A_t, A, B_s, B_t, B)
    hB = form(B_s, B_t, B, B_s, B_t, B)
    cross = float(simpson(e * model.kdot_theta_at(s), x=s))
    return hA, hAB, hB, cross


def bent_trial_oracle(model: StripModel, n: int, eps: float, eta=None, mollifier: str = "plateau",
                      t_points: int = 201, ds: float = 0.005) -> float:
    """``h1[psi_{n,eps}] = h[psi] - E_1 |psi|^2`` for ``psi = phi_n chi_1 + eps eta t chi_1``.

    Computed by 2D Simpson quadrature; no eigensolver is involved. ``eta``
    defaults to a unit bump of width 4 (so the sign condition holds when
    ``k.Theta`` is a positive bump near the origin).
    """
    eta = {"type": "bump", "height": 1.0, "width": 4.0, "center": 0.0} if eta is None else eta
    hA, hAB, hB, cross = _trial_pieces(model, n, eta, mollifier, t_points, ds)
    if eps != 0.0 and cross <= 0.0:
        raise ValueError("eta must be sign-aligned with k.Theta (int eta k.Theta > 0)")
    return hA + 2.0 * eps * hAB + eps * eps * hB


def trial_search(model: StripModel, eta=None, n_ladder=(2, 4, 8, 16, 32, 64), eps_grid=None,
                 mollifier: str = "plateau", t_points: int = 201, ds: float = 0.005) -> dict:
    """Coarse grid search over ``(n, eps)`` for a negative trial value.

    The value is quadratic in ``eps``, so the three pieces are computed once per
    ``n`` and the grid is scanned exactly; the best pair is then re-evaluated
    directly.
    """
    eta = {"type": "bump", "height": 1.0, "width": 4.0, "center": 0.0} if eta is None else eta
    if eps_grid is None:
        eps_grid = np.r_[-np.geomspace(1e-3, 2.0, 25)[::-1], np.geomspace(1e-3, 2.0, 25)]
    rows = []
    best = None
    for n in n_ladder:
        hA, hAB, hB, cross = _trial_pieces(model, n, eta, mollifier, t_points, ds)
        vals = hA + 2 * eps_grid * hAB + eps_grid**2 * hB
        j = int(np.argmin(vals))
        rows.append((n, hA, hAB, hB, float(eps_grid[j]), float(vals[j])))
        if best is None or vals[j] < best[2]:
            best = (n, float(eps_grid[j]), float(vals[j]))
    direct = bent_trial_oracle(model, best[0], best[1], eta, mollifier, t_points, ds) if best else np.nan
    table = {k: [r[i] for r in rows] for i, k in enumerate(["n", "h1_phi_n", "h1_cross", "h1_eta", "best_eps", "best_value"])}
    return {"n": best[0], "eps": best[1], "value": direct, "table": table, "cross_integral": cross}


def _require_untwisted_bend(model: StripModel) -> None:
    if model.max_theta_prime > 0.0:
        raise AssumptionError("bent-strip study needs an untwisted model (Theta' = 0)")
    if model.max_kdot == 0.0:
        raise AssumptionError("bent-strip study needs k.Theta != 0")


def bent_bound_state(config: StudyConfig) -> Verdict:
    """Bound state below the threshold for an untwisted, bent, asymptotically flat strip.

    Params: ``s_ladder`` (window sizes for the monotonicity check, run at the
    mesh steps of rung ``s_rung``), ``reference_error`` (straight-strip error to
    beat, defaults to the one at the finest rung), ``trial`` (dict of
    :func:`trial_search` keyword arguments, or ``False`` to skip it).
    """
    config.check_ladder()
    p = config.params
    model = build_model(config.model)
    _require_untwisted_bend(model)
    report = validate(model)
    if not report.flags["asymptotically_flat_ok"]:
        raise AssumptionError("bending does not decay inside the window", report)
    meshes = config.meshes()
    E1 = threshold(model.a)
    lam = _pmap(lambda m: float(_lowest(assemble_2d(model, m), config.tol, config.seed)[0]),
                meshes, config.threads)
    lam = np.array(lam)
    straight_err = np.array([abs(straight_exact(m)[1] - straight_exact(m)[0]) for m in meshes])
    fin = meshes[-1]
    extrap = richardson(lam[-2], lam[-1], meshes[-2].hs / fin.hs) if len(meshes) > 1 else lam[-1]
    ref_err = float(p.get("reference_error", straight_err[-1]))
    e1h = discrete_threshold(model.a, fin.nt)
    # the discrete threshold sits below E_1, so binding is also measured against it
    margin_raw = E1 - lam[-1]
    margin_ext = E1 - extrap
    margin_disc = e1h - lam[-1]
    margin = float(min(margin_raw, margin_ext, margin_disc))

    # monotonicity in S at fixed steps
    rung = meshes[int(p.get("s_rung", len(meshes) - 1))]
    s_ladder = p.get("s_ladder", [rung.S / 2, rung.S])
    s_meshes = [Mesh2D(float(S), model.a, int(round(2 * S / rung.hs)) - 1, rung.nt) for S in s_ladder]
    lam_S = np.array(_pmap(lambda m: float(_lowest(assemble_2d(model, m), config.tol, config.seed)[0]),
                           s_meshes, config.threads))
    monotone = bool(np.all(np.diff(lam_S) <= 1e-10 * np.abs(lam_S[1:])))

    neumann = float(_lowest(assemble_2d(model, fin, "neumann"), config.tol, config.seed)[0])
    bracket = bool(neumann <= lam[-1] + 1e-10)

    ok = bool(margin >= 3.0 * ref_err and monotone)
    data = {
        "ladder": {"S": [m.S for m in meshes], "ns": [m.ns for m in meshes], "nt": [m.nt for m in meshes],
                   "lambda1": lam, "straight_error": straight_err},
        "window": {"S": [m.S for m in s_meshes], "lambda1": lam_S},
    }
    summary = {"E1": E1, "lambda1_finest": float(lam[-1]), "lambda1_extrapolated": float(extrap),
               "margin_raw": float(margin_raw), "margin_extrapolated": float(margin_ext),
               "margin_discrete": float(margin_disc), "E1_discrete": e1h,
               "reference_error": ref_err, "required_margin": 3.0 * ref_err,
               "monotone_in_S": monotone, "neumann_lambda1": neumann, "bracketing_ok": bracket}
    trial = p.get("trial", {})
    if trial is not False:
        res = trial_search(model, **trial)
        data["trial"] = res["table"]
        summary.update({"trial_n": res["n"], "trial_eps": res["eps"], "trial_value": res["value"],
                        "trial_negative": bool(res["value"] < 0)})
        summary["sign_agreement"] = bool((res["value"] < 0) == (lam[-1] < E1))
        ok = ok and bool(res["value"] < 0)
    return Verdict("bent_bound_state", ok, margin - 3.0 * ref_err, data, summary)


# -- twisted strips ----------------------------------------------------------------------
def hardy_eta(s, center: float, half: float, inner: float):
    """Cutoff: 0 on ``|s - center| <= inner``, 1 for ``|s - center| >= half``."""
    x = (np.abs(np.asarray(s, dtype=float) - center) - inner) / (half - inner)
    return smoothstep(x)


def hardy_eta_prime_sup(half: float, inner: float) -> float:
    x = np.linspace(0.0, 1.0, 20001)
    return float(np.max(np.abs(smoothstep_prime(x)))) / (half - inner)


def neumann_lowest(model: StripModel, lo: float, hi: float, cells: int, lam_nt: int) -> float:
    """Lowest eigenvalue of ``-d^2 + lambda(s)`` on ``(lo, hi)`` with Neumann ends.

    Cell-centred differences; ``lambda`` from the extrapolated transverse solves.
    """
    h = (hi - lo) / cells
    s = lo + h * (np.arange(cells) + 0.5)
    grid = SGrid(float(s[0]), h, cells)
    sub = StripModel.direct(model.a, grid, model.kdot_theta_at(s), model.abs_theta_prime_at(s))
    lam = lambda_profile(sub, lam_nt).lam
    main = np.full(cells, 2.0)
    main[0] = main[-1] = 1.0
    import scipy.linalg as sla

    vals = sla.eigh_tridiagonal(main / h**2 + lam, -np.ones(cells - 1) / h**2,
                                select="i", select_range=(0, 0), eigvals_only=True)
    return float(vals[0])


def hardy_form(model: StripModel, mesh: Mesh2D) -> DiscreteForm:
    """Pencil ``(K - E_1^h M, M_rho)`` with ``rho = 1/(1 + s^2)`` as a DiscreteForm."""
    form = assemble_2d(model, mesh)
    e1h = discrete_threshold(model.a, mesh.nt)
    rho = np.repeat(1.0 / (1.0 + mesh.s_nodes() ** 2), mesh.nt)
    K = (form.stiffness - e1h * form.M).tocsr()
    return DiscreteForm(K, form.mass * rho, "dirichlet", mesh, form.shape, {"kind": "hardy_pencil"})


def hardy_certificate(config: StudyConfig) -> Verdict:
    """Hardy-type inequality for an unbent, twisted strip.

    Params: ``lambda_nt`` (transverse mesh for lambda), ``interval`` (I; defaults
    to the support of |Theta'|), ``inner`` (fraction of |I|/2 where the cutoff
    vanishes), ``neumann_cells``, ``stability`` (relative window, default 0.2).
    """
    config.check_ladder()
    p = config.params
    model = build_model(config.model)
    if model.max_kdot > 1e-12:
        raise AssumptionError("Hardy study needs an unbent model (k.Theta = 0)")
    if model.a * model.max_theta_prime > HARDY_BOUND * (1 + 1e-12):
        raise AssumptionError(f"a*max|Theta'| = {model.a * model.max_theta_prime:.6g} exceeds sqrt 2")
    twisted = model.max_theta_prime > 0.0
    lam_nt = int(p.get("lambda_nt", 200))
    prof = lambda_profile(model, lam_nt, threads=config.threads)
    floor = local_hardy_floor(model, prof)
    tp = model.absThetaPrime
    lam_nonneg = bool(np.min(prof.lam) >= -1e-8)
    on_bump = tp > 1e-12
    # lambda ~ |Theta'|^2 sinks below eigenvalue round-off in the far tails of a
    # smooth bump, so positivity is checked where it is numerically resolvable
    resolved = tp**2 > float(p.get("resolvable", 1e-8))
    lam_pos = bool(np.all(prof.lam[resolved] > 0)) if twisted else False
    lam_zero_off = bool(np.all(np.abs(prof.lam[~on_bump]) <= 1e-8))

    meshes = config.meshes()
    c_num = np.array(_pmap(lambda m: float(lobpcg(hardy_form(model, m), 1, config.tol, config.seed).eigenvalues[0]),
                           meshes, config.threads))
    rel_change = abs(c_num[-1] - c_num[-2]) / abs(c_num[-1]) if len(c_num) > 1 else np.inf
    stable = bool(rel_change <= p.get("stability", 0.2))

    fin = meshes[-1]
    plain = float(_lowest(assemble_2d(model, fin), config.tol, config.seed)[0])
    neumann = float(_lowest(assemble_2d(model, fin, "neumann"), config.tol, config.seed)[0])
    E1 = threshold(model.a)
    e1h = discrete_threshold(model.a, fin.nt)

    summary = {"twisted": twisted, "lambda_min": floor.minimum, "lambda_max": floor.maximum,
               "lambda_support": floor.support, "lambda_nonnegative": lam_nonneg,
               "lambda_positive_on_twist": lam_pos, "lambda_zero_off_twist": lam_zero_off,
               "c_num": c_num.tolist(), "c_num_rel_change": float(rel_change), "c_num_stable": stable,
               "lambda1_plain": plain, "lambda1_neumann": neumann, "E1": E1, "E1_discrete": e1h,
               "plain_above_threshold": bool(plain >= E1 - p.get("plain_tol", 1e-3))}
    data = {"lambda": {"s": prof.grid.nodes, "lambda": prof.lam},
            "c_num": {"S": [m.S for m in meshes], "ns": [m.ns for m in meshes],
                      "nt": [m.nt for m in meshes], "c_num": c_num}}
    if not twisted:
        summary["note"] = "untwisted: no Hardy weight expected; c_num decays with the window"
        return Verdict("hardy_certificate", False, float(-c_num[-1]), data, summary)

    if "interval" in p:
        lo, hi = map(float, p["interval"])
    else:
        idx = np.nonzero(on_bump)[0]
        lo, hi = float(prof.grid.nodes[idx[0]] - prof.grid.ds), float(prof.grid.nodes[idx[-1]] + prof.grid.ds)
    s0 = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    inner = float(p.get("inner", 0.1)) * half
    lam0 = neumann_lowest(model, lo, hi, int(p.get("neumann_cells", 400)), lam_nt)
    sI = np.linspace(lo, hi, 4001)
    C = float(np.sqrt(1.0 + model.a**2 * np.max(model.abs_theta_prime_at(sI)) ** 2))
    eta_sup = hardy_eta_prime_sup(half, inner)
    Kc = 16.0 * eta_sup**2 + 2.0
    x = np.linspace(-1e3, 1e3, 200001)
    inf_factor = float(min(1.0, np.min((1 + x**2) / (1 + (x - s0) ** 2))))
    c_ana = lam0 / (C**2 * (16.0 * lam0 + C * Kc)) * inf_factor
    beats = bool(c_num[-1] >= c_ana)
    summary.update({"interval": [lo, hi], "lambda0": lam0, "C": C, "eta_prime_sup": eta_sup,
                    "eta_prime_nominal": 2.0 / (hi - lo), "K": Kc, "inf_factor": inf_factor,
                    "c_ana": c_ana, "c_num_ge_c_ana": beats})
    ok = bool(lam_nonneg and lam_pos and c_num[-1] > 0 and stable and beats and summary["plain_above_threshold"])
    return Verdict("hardy_certificate", ok, float(c_num[-1] - c_ana), data, summary)


def _with_bending(spec: dict, eps: float, twisted: bool) -> dict:
    out = dict(spec)
    out["kdot"] = {"type": "decay", "eps": float(eps)}
    if not twisted:
        out["theta_prime"] = {"type": "zero"}
    return out


def stability_study(config: StudyConfig, eps_ladder=None) -> Verdict:
    """Twisted strip plus bending ``eps/(1 + s^2)``: no spectrum below E_1 for small eps.

    Params: ``eps_ladder`` (twisted runs), ``untwisted_eps`` (bent-only runs
    looking for the crossing), ``tol`` (1e-3, for ``lambda_1 >= E_1 - tol``).
    """
    p = config.params
    eps_ladder = list(p.get("eps_ladder", [0.0, 0.05, 0.1, 0.2]) if eps_ladder is None else eps_ladder)
    untw = list(p.get("untwisted_eps", [0.2, 0.4, 0.8]))
    tol = float(p.get("tol", 1e-3))
    base = build_model(config.model)
    if base.max_theta_prime == 0.0:
        raise AssumptionError("stability study needs a twisted base model")
    mesh = config.meshes()[-1]
    E1 = threshold(base.a)
    e1h = discrete_threshold(base.a, mesh.nt)

    def run(args):
        eps, twisted = args
        model = build_model(_with_bending(config.model, eps, twisted))
        return float(_lowest(assemble_2d(model, mesh), config.tol, config.seed)[0])

    jobs = [(e, True) for e in eps_ladder] + [(e, False) for e in untw]
    vals = _pmap(run, jobs, config.threads)
    lam_tw = np.array(vals[: len(eps_ladder)])
    lam_un = np.array(vals[len(eps_ladder):])
    above = lam_tw >= E1 - tol
    threshold_eps = 0.0
    for e, ok in zip(eps_ladder, above):
        if not ok:
            break
        threshold_eps = e
    crossing = [e for e, lv in zip(untw, lam_un) if lv < e1h]
    small_ok = bool(np.all(above[np.array(eps_ladder) <= threshold_eps]))
    ok = bool(threshold_eps > 0 and small_ok and crossing)
    data = {"twisted": {"eps": eps_ladder, "lambda1": lam_tw, "gap_to_E1": lam_tw - E1},
            "untwisted": {"eps": untw, "lambda1": lam_un, "gap_to_E1h": lam_un - e1h}}
    summary = {"E1": E1, "E1_discrete": e1h, "threshold_eps": threshold_eps,
               "crossing_eps": crossing[0] if crossing else None, "mesh": mesh.to_dict()}
    margin = float(np.min(lam_tw[above] - (E1 - tol))) if np.any(above) else -np.inf
    return Verdict("stability", ok, margin, data, summary)


# -- quasimodes ----------------------------------------------------------------------------
def quasimode_vector(mesh: Mesh2D, n: int, lam: float, model: StripModel | None = None):
    """Real and imaginary parts of ``phi_n(s) chi_1(t) e^{i lam s}`` on the Dirichlet mesh.

    ``phi_n(s) = n^{-1/2} phi(s/n - n)`` with ``phi`` the L2-normalised bump.
    """
    s = mesh.s_nodes()
    x = np.linspace(-1, 1, 20001)
    norm = np.sqrt(simpson(bump(x) ** 2, x=x))
    phi = bump(s / n - n) / (norm * np.sqrt(n))
    chi = discrete_chi1(mesh.a, mesh.nt)
    re = np.outer(phi * np.cos(lam * s), chi).ravel()
    im = np.outer(phi * np.sin(lam * s), chi).ravel()
    return re, im


def quasimode_study(config: StudyConfig, eta_energies=None, n_ladder=None) -> Verdict:
    """Weyl-sequence residuals ``r_n`` in the discrete dual norm ``(K + M)^{-1}``.

    Energies are given in units of the threshold (params ``eta_factors``,
    default ``[1, 2]``); the discrete dispersion relation fixes the energy
    matching the plane wave on the mesh.
    """
    p = config.params
    model = build_model(config.model)
    report = validate(model)
    if not report.flags["asymptotically_flat_ok"]:
        raise AssumptionError("quasimode study needs an asymptotically flat model", report)
    mesh = config.meshes()[-1]
    n_ladder = list(p.get("n_ladder", [4, 8, 16]) if n_ladder is None else n_ladder)
    E1 = threshold(model.a)
    factors = p.get("eta_factors", [1.0, 2.0]) if eta_energies is None else [e / E1 for e in eta_energies]
    n_max = max(n_ladder)
    if n_max**2 + n_max >= mesh.S - mesh.hs:
        raise ValueError(f"window S = {mesh.S} too small for n = {n_max}")
    form = assemble_2d(model, mesh)
    e1h = discrete_threshold(model.a, mesh.nt)
    table = {"n": [], "eta": [], "r_n": []}
    decreasing = True
    for fac in factors:
        lam = float(np.sqrt(max(fac * E1 - E1, 0.0)))
        eta_h = e1h + 4.0 / mesh.hs**2 * np.sin(0.5 * lam * mesh.hs) ** 2
        rs = []
        for n in n_ladder:
            re, im = quasimode_vector(mesh, n, lam)
            nrm = np.sqrt(re @ (form.mass * re) + im @ (form.mass * im))
            r2 = 0.0
            for part in (re / nrm, im / nrm):
                if not np.any(part):
                    continue
                R = form.stiffness @ part - eta_h * form.mass * part
                x = solve_shifted(form, -1.0, R, tol=1e-12, preconditioner="fastdiag")
                r2 += float(R @ x)
            rs.append(np.sqrt(r2))
            table["n"].append(n)
            table["eta"].append(fac * E1)
            table["r_n"].append(rs[-1])
        decreasing &= bool(np.all(np.diff(rs) < 0))
    r = np.array(table["r_n"]).reshape(len(factors), len(n_ladder))
    margin = float(np.min(r[:, :-1] - r[:, 1:]))
    summary = {"E1": E1, "eta_factors": factors, "r_n": r.tolist(), "mesh": mesh.to_dict(),
               "dual_norm": "discrete surrogate (K + M)^{-1}"}
    return Verdict("quasimodes", decreasing, margin, {"residuals": table}, summary)


# -- thin strips ---------------------------------------------------------------------------
def effective_lowest(model: StripModel, S: float, hs: float, richardson_levels: bool = True) -> float:
    """Lowest Dirichlet eigenvalue of ``-d^2 + V_eff`` on ``(-S, S)``, extrapolated."""
    n = int(round(2 * S / hs)) - 1
    mu = smallest_eigs(assemble_effective_1d(model, Mesh1D.symmetric(S, n)), 1).eigenvalues[0]
    if not richardson_levels:
        return float(mu)
    mu2 = smallest_eigs(assemble_effective_1d(model, Mesh1D.symmetric(S, 2 * n + 1)), 1).eigenvalues[0]
    return float(richardson(mu, mu2, 2.0))


def strip_gap(model: StripModel, meshes: list[Mesh2D], tol: float, seed: int) -> tuple[float, list]:
    """``lambda_1 - E_1^h`` on each mesh and the Richardson value of the last two."""
    vals = [float(_lowest(assemble_2d(model, m), tol, seed)[0]) - discrete_threshold(m.a, m.nt)
            for m in meshes]
    if len(vals) == 1:
        return vals[0], vals
    return float(richardson(vals[-2], vals[-1], meshes[-2].hs / meshes[-1].hs)), vals


def thin_limit_sweep(config: StudyConfig, a_ladder=None) -> Verdict:
    """Rate of ``e(a) = |lambda_1(H) - E_1 - mu_1(H_eff)|`` as ``a -> 0``.

    The ladder ``(S, ns, nt)`` is reused at every half-width (so ``ht/a`` is
    fixed); the last two rungs are Richardson-combined.
    """
    p = config.params
    a_ladder = list(p.get("a_ladder", [0.2, 0.1, 0.05, 0.025]) if a_ladder is None else a_ladder)
    base = build_model(config.model)
    S = config.ladder[-1][0]
    hs_eff = float(p.get("effective_hs", 0.005))
    mu = effective_lowest(base, S, hs_eff)

    def run(a):
        model = base.with_half_width(a)
        rep = validate(model)
        if not rep.flags["thin_ass_ok"] or not rep.flags["ass21_ok"]:
            raise AssumptionError(f"assumptions fail at a = {a}", rep)
        gap, raw = strip_gap(model, config.meshes(a), config.tol, config.seed)
        dev = thin_transform_data(model, a).deviations
        return gap, raw, dev

    results = _pmap(run, a_ladder, config.threads)
    gaps = np.array([r[0] for r in results])
    e = np.abs(gaps - mu)
    dev_v = np.array([r[2]["v_a_minus_v_eff"] for r in results])
    la = np.log(np.array(a_ladder))
    slope = float(np.polyfit(la, np.log(e), 1)[0])
    monotone = bool(np.all(np.diff(e) < 0))
    v_ratios = dev_v[:-1] / dev_v[1:]
    v_slope = float(np.polyfit(la, np.log(dev_v), 1)[0])
    lo, hi = p.get("slope_window", (0.8, 1.5))
    rlo, rhi = p.get("ratio_window", (1.7, 2.3))
    slope_ok = bool(lo <= slope <= hi)
    ratio_ok = bool(np.all((v_ratios >= rlo) & (v_ratios <= rhi)))
    ok = slope_ok and monotone and ratio_ok
    data = {"sweep": {"a": a_ladder, "gap": gaps, "e": e, "v_a_minus_v_eff": dev_v,
                      "f_a_minus_1": [r[2]["f_a_minus_1"] for r in results],
                      "d1_f_a": [r[2]["d1_f_a"] for r in results]}}
    summary = {"mu1_eff": mu, "slope": slope, "slope_ok": slope_ok, "monotone": monotone,
               "v_ratios": v_ratios.tolist(), "v_slope": v_slope, "v_ratio_ok": ratio_ok,
               "raw_gaps": [r[1] for r in results]}
    margin = float(min(slope - lo, hi - slope))
    return Verdict("thin_limit", ok, margin, data, summary)


def projection_defect_study(config: StudyConfig) -> Verdict:
    """Transverse-projection defect of the comparison form at one half-width.

    Params: ``a`` (default 0.1), ``samples`` (random right-hand sides, default 20).
    The mesh is the last ladder rung (its ``a`` field is replaced by ``a``).
    """
    p = config.params
    a = float(p.get("a", 0.1))
    model = build_model(config.model).with_half_width(a)
    S, ns, nt = config.ladder[-1]
    form = transformed_form(model, a, float(S), int(ns), int(nt))
    z0 = form.meta["z0"]
    z = float(p.get("z", z0 - 1.0))
    rng = np.random.default_rng(config.seed)
    ratios = []
    bound = None
    for _ in range(int(p.get("samples", 20))):
        rep = projection_defect(form, a, z, rng.standard_normal(form.size))
        ratios.append(rep.ratio)
        bound = rep
    # a right-hand side living in the second transverse mode nearly saturates the bound
    mesh = form.mesh
    t = mesh.t_nodes()
    chi2 = np.sin(np.pi * t / a)
    F2 = np.outer(bump(mesh.s_nodes() / 4.0), chi2).ravel()
    sharp = projection_defect(form, a, z, F2).ratio
    ratios = np.array(ratios)
    ok = bool(np.all(ratios <= bound.bound_derived))
    summary = {"a": a, "z": z, "z0": z0, "max_ratio": float(ratios.max()), "bound_derived": bound.bound_derived,
               "bound_printed": bound.bound_printed, "bound_discrete": bound.bound_discrete,
               "second_mode_ratio": sharp}
    return Verdict("projection_defect", ok, float(bound.bound_derived - ratios.max()),
                   {"ratios": {"sample": np.arange(ratios.size), "ratio": ratios}}, summary)


def oracle_equivalence(forms, m: int = 5, rel_tol: float = 1e-8, tol: float = 1e-10, seed: int = 0) -> Verdict:
    """LOBPCG vs dense LAPACK on small forms: first ``m`` eigenvalues."""
    rows = {"size": [], "max_rel_diff": []}
    worst = 0.0
    for form in forms:
        if form.size > 2500:
            raise ValueError("oracle comparison is limited to 2500 unknowns")
        it = lobpcg(form, m, tol, seed).eigenvalues
        de = dense_eigs(form, m).eigenvalues
        d = float(np.max(np.abs(it - de) / np.abs(de)))
        rows["size"].append(form.size)
        rows["max_rel_diff"].append(d)
        worst = max(worst, d)
    return Verdict("oracle_equivalence", bool(worst <= rel_tol), float(rel_tol - worst), {"forms": rows},
                   {"worst_rel_diff": worst})


STUDIES = {
    "straight": straight_strip_convergence,
    "bent": bent_bound_state,
    "hardy": hardy_certificate,
    "stability": stability_study,
    "quasimode": quasimode_study,
    "thin-sweep": thin_limit_sweep,
    "defect": projection_defect_study,
}


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def summary_json(verdict: Verdict) -> str:
    return to_json(verdict.to_dict())


__all__ = [
    "StudyConfig", "Verdict", "build_model", "build_geometry", "profile_from_spec",
    "straight_strip_convergence", "bent_bound_state", "bent_trial_oracle", "trial_search",
    "hardy_certificate", "stability_study", "quasimode_study", "thin_limit_sweep",
    "projection_defect_study", "oracle_equivalence", "effective_potential",
]
