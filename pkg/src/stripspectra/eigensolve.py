"""Smallest eigenpairs of ``K u = lambda M u`` with diagonal positive ``M``.

The iterative path is a block LOBPCG written here (so that the Ritz history and
the stopping rule are under our control). Small problems go to LAPACK, which
also serves as the reference oracle in the tests.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import DiscreteForm, Mesh2D, _chain_edges, _edge_matrix
from .io import write_json

log = logging.getLogger(__name__)

DENSE_LIMIT = 2500
STAGNATION_WINDOW = 50
# fast-diagonal preconditioner shifted to 95% of the flat ground energy
LOBPCG_SHIFT_FRACTION = 0.95


class ConvergenceError(RuntimeError):
    """Iteration cap reached; ``result`` holds the best approximation found."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class IndefiniteShiftError(ValueError):
    """CG met a direction of non-positive curvature: the shift is not below the spectrum."""


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    residuals: np.ndarray
    iterations: int
    solver: str
    converged: bool = True
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues,
            "residuals": self.residuals,
            "iterations": self.iterations,
            "solver": self.solver,
            "converged": self.converged,
        }

    def write_json(self, path) -> None:
        write_json(path, self.to_dict())


def _residuals(K, mass, vals, vecs) -> np.ndarray:
    Mv = mass[:, None] * vecs
    R = K @ vecs - Mv * vals[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(Mv, axis=0)


def tolerance_for(vals, tol: float) -> np.ndarray:
    """Residual threshold: ``tol`` scaled by ``max(1, |lambda|)`` (relative for large eigenvalues)."""
    return tol * np.maximum(1.0, np.abs(np.asarray(vals, dtype=float)))


def _check_form(form: DiscreteForm, m: int, tol: float) -> None:
    if m < 1:
        raise ValueError("m must be at least 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if np.any(form.mass <= 0):
        raise ValueError("mass matrix must be positive")
    if m > form.size:
        raise ValueError(f"asked for {m} eigenpairs of a {form.size}-dimensional problem")


def _normalise_signs(vecs: np.ndarray) -> np.ndarray:
    """Fix the sign so that the largest-magnitude entry of each vector is positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    s = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    s[s == 0] = 1.0
    return vecs * s[None, :]


def dense_eigs(form: DiscreteForm, m: int) -> SpectrumResult:
    """LAPACK generalized symmetric eigensolver (the reference oracle)."""
    K = form.stiffness.toarray()
    vals, vecs = sla.eigh(K, np.diag(form.mass), subset_by_index=[0, m - 1])
    vecs = _normalise_signs(vecs)
    return SpectrumResult(vals, vecs, _residuals(form.stiffness, form.mass, vals, vecs), 0, "dense")


def _is_tridiagonal(K: sp.csr_matrix) -> bool:
    coo = K.tocoo()
    return bool(np.all(np.abs(coo.row - coo.col) <= 1))


def tridiagonal_eigs(form: DiscreteForm, m: int) -> SpectrumResult:
    """Tridiagonal ``K`` with diagonal ``M``: symmetric scaling then LAPACK stebz/stein."""
    d = 1.0 / np.sqrt(form.mass)
    A = sp.diags(d) @ form.stiffness @ sp.diags(d)
    diag = A.diagonal()
    off = A.diagonal(1)
    vals, w = sla.eigh_tridiagonal(diag, off, select="i", select_range=(0, m - 1))
    vecs = _normalise_signs(d[:, None] * w)
    return SpectrumResult(vals, vecs, _residuals(form.stiffness, form.mass, vals, vecs), 0, "tridiagonal")


# -- preconditioners -----------------------------------------------------------
class FastDiagonalPreconditioner:
    """Exact inverse of the ``f = 1`` form on the same tensor mesh.

    ``K0 = (ht/hs) L_s x I + (hs/ht) I x L_t`` is diagonalised by the 1D
    eigenbases, so applying ``K0^{-1}`` costs two small dense products per side.
    Since ``f`` is bounded above and below, ``K0`` is spectrally equivalent to
    ``K`` and the LOBPCG rate becomes mesh independent.
    """

    def __init__(self, mesh: Mesh2D, end_condition: str, shape, shift: float = 0.0,
                 shift_fraction: float | None = None):
        ns, nt = shape
        hs, ht = mesh.hs, mesh.ht
        ps, qs = _chain_edges(ns, end_condition == "dirichlet")
        pt, qt = _chain_edges(nt, True)
        Ls = _edge_matrix(ns, ps, qs, np.ones(ps.size)).toarray()
        Lt = _edge_matrix(nt, pt, qt, np.ones(pt.size)).toarray()
        self.ds, self.Qs = np.linalg.eigh(Ls)
        self.dt, self.Qt = np.linalg.eigh(Lt)
        denom = (ht / hs) * self.ds[:, None] + (hs / ht) * self.dt[None, :]
        if shift_fraction is not None:
            # shift towards the bottom of the flat spectrum (near shift-invert)
            shift = shift_fraction * float(denom.min()) / (hs * ht)
        denom = denom - shift * hs * ht
        if np.any(denom <= 0):
            raise ValueError("shift is not below the spectrum of the flat form")
        self.inv = 1.0 / denom
        self.shape = (ns, nt)

    def __call__(self, R: np.ndarray) -> np.ndarray:
        ns, nt = self.shape
        single = R.ndim == 1
        R2 = R.reshape(ns, nt, -1)
        X = np.einsum("ia,ijk,jb->abk", self.Qs, R2, self.Qt, optimize=True)
        X *= self.inv[:, :, None]
        Y = np.einsum("ia,abk,jb->ijk", self.Qs, X, self.Qt, optimize=True)
        Y = Y.reshape(ns * nt, -1)
        return Y[:, 0] if single else Y


def make_preconditioner(form: DiscreteForm, kind: str = "auto", shift: float = 0.0,
                        shift_fraction: float | None = None):
    """``fastdiag`` (2D tensor meshes), ``factor``, ``jacobi`` or ``none``.

    ``auto`` uses ``fastdiag`` on 2D tensor meshes and ``factor`` (sparse LU of
    ``K - sigma M`` with ``sigma`` below the Gershgorin bound) otherwise; on 1D
    chains the factorisation is banded and cheap.
    """
    if kind == "auto":
        kind = "fastdiag" if isinstance(form.mesh, Mesh2D) and len(form.shape) == 2 else "factor"
    if kind == "fastdiag":
        return FastDiagonalPreconditioner(form.mesh, form.end_condition, form.shape, shift, shift_fraction)
    if kind == "factor":
        sigma = min(0.0, gershgorin_lower_bound(form)) - 1.0
        solve = spla.factorized((form.stiffness - sigma * sp.diags(form.mass)).tocsc())
        return lambda R: solve(R) if R.ndim == 1 else np.column_stack([solve(c) for c in R.T])
    if kind == "jacobi":
        inv = 1.0 / form.stiffness.diagonal()
        return lambda R: inv[:, None] * R if R.ndim == 2 else inv * R
    if kind == "none":
        return lambda R: R
    raise ValueError(f"unknown preconditioner {kind!r}")


# -- LOBPCG ----------------------------------------------------------------------
def _m_orthonormalise(S: np.ndarray, mass: np.ndarray, drop: float = 1e-12) -> np.ndarray:
    """SVQB: M-orthonormal basis of span(S), dropping numerically dependent directions."""
    G = S.T @ (mass[:, None] * S)
    G = 0.5 * (G + G.T)
    dg = np.sqrt(np.maximum(np.diag(G), 1e-300))
    Gs = G / np.outer(dg, dg)
    w, V = np.linalg.eigh(Gs)
    keep = w > drop * w[-1]
    B = (V[:, keep] / np.sqrt(w[keep])[None, :]) / dg[:, None]
    Q = S @ B
    # one refinement pass for accuracy
    G2 = Q.T @ (mass[:, None] * Q)
    L = np.linalg.cholesky(0.5 * (G2 + G2.T))
    return sla.solve_triangular(L, Q.T, lower=True).T


def lobpcg(form: DiscreteForm, m: int, tol: float = 1e-9, seed: int = 0, maxiter: int | None = None,
           preconditioner="auto", X0: np.ndarray | None = None) -> SpectrumResult:
    """Block LOBPCG for the ``m`` smallest eigenpairs (block size ``m + 2``).

    Raises :class:`ConvergenceError` at the iteration cap ``10 sqrt(N)`` or
    after ``STAGNATION_WINDOW`` iterations without residual progress.
    """
    K = form.stiffness
    mass = form.mass
    N = form.size
    bs = min(m + 2, N)
    cap = maxiter if maxiter is not None else max(50, int(10 * np.sqrt(N)))
    if isinstance(preconditioner, str):
        T = make_preconditioner(form, preconditioner, shift_fraction=LOBPCG_SHIFT_FRACTION)
    else:
        T = preconditioner

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, bs))
    if X0 is not None:
        k0 = min(bs, X0.shape[1])
        X[:, :k0] = X0[:, :k0]
    X = _m_orthonormalise(X, mass)
    A = X.T @ (K @ X)
    vals, C = np.linalg.eigh(0.5 * (A + A.T))
    X = X @ C
    KX = K @ X
    P = None
    history = [float(vals[0])]
    best = np.inf
    since_best = 0
    res = np.full(bs, np.inf)

    for it in range(1, cap + 1):
        R = KX - (mass[:, None] * X) * vals[None, :]
        res = np.linalg.norm(R, axis=0) / np.linalg.norm(mass[:, None] * X, axis=0)
        if np.all(res[:m] <= tolerance_for(vals[:m], tol)):
            vecs = _normalise_signs(X[:, :m])
            rr = _residuals(K, mass, vals[:m], vecs)
            return SpectrumResult(vals[:m].copy(), vecs, rr, it - 1, "lobpcg", True, history)
        worst = float(np.max(res[:m] / tolerance_for(vals[:m], 1.0)))
        if worst < 0.5 * best:
            best, since_best = worst, 0
        else:
            since_best += 1
            if since_best >= STAGNATION_WINDOW:
                break
        active = res > 0.01 * tolerance_for(vals, tol)
        W = T(R[:, active])
        W = W - X @ (X.T @ (mass[:, None] * W))
        blocks = [X, W] if P is None else [X, W, P]
        S = _m_orthonormalise(np.hstack(blocks), mass)
        KS = K @ S
        A = S.T @ KS
        vals_all, C = np.linalg.eigh(0.5 * (A + A.T))
        Xn = S @ C[:, :bs]
        KXn = KS @ C[:, :bs]
        # search direction: part of the new iterate outside the old block
        P = Xn - X @ (X.T @ (mass[:, None] * Xn))
        pn = np.linalg.norm(P, axis=0)
        P = P[:, pn > 1e-14 * np.sqrt(N)] if np.any(pn > 0) else None
        if P is not None and P.shape[1] == 0:
            P = None
        X, KX, vals = Xn, KXn, vals_all[:bs]
        history.append(float(vals[0]))

    vecs = _normalise_signs(X[:, :m])
    rr = _residuals(K, mass, vals[:m], vecs)
    result = SpectrumResult(vals[:m].copy(), vecs, rr, it, "lobpcg", False, history)
    raise ConvergenceError(f"LOBPCG stopped after {it} iterations (residual {np.max(rr):.3e})", result)


# -- shift-invert Lanczos fallback --------------------------------------------
def shift_invert_lanczos(form: DiscreteForm, m: int, tol: float = 1e-9, sigma: float | None = None,
                         preconditioner="auto", seed: int = 0) -> SpectrumResult:
    """ARPACK in shift-invert mode; the inner solves are preconditioned CG.

    The start vector is seeded random: a symmetric start (e.g. all ones) is
    blind to the odd modes of a symmetric strip.
    """
    K = form.stiffness
    mass = form.mass
    if sigma is None:
        sigma = min(0.0, gershgorin_lower_bound(form)) - 1.0
    T = make_preconditioner(form, preconditioner)
    A = (K - sigma * sp.diags(mass)).tocsr()
    Pop = spla.LinearOperator(A.shape, matvec=lambda r: T(np.asarray(r).ravel()))
    counter = {"inner": 0}

    def inv(b):
        x, info = spla.cg(A, b, rtol=1e-13, atol=0.0, M=Pop, maxiter=10 * A.shape[0])
        counter["inner"] += 1
        if info != 0:
            raise ConvergenceError("inner CG failed in shift-invert Lanczos")
        return x

    OPinv = spla.LinearOperator(A.shape, matvec=inv)
    vals, vecs = spla.eigsh(K, k=m, M=sp.diags(mass).tocsr(), sigma=sigma, which="LM", OPinv=OPinv,
                            tol=tol * 1e-2, v0=np.random.default_rng(seed).standard_normal(form.size))
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / np.sqrt(np.einsum("ij,i,ij->j", vecs, mass, vecs))[None, :]
    vecs = _normalise_signs(vecs)
    rr = _residuals(K, mass, vals, vecs)
    return SpectrumResult(vals, vecs, rr, counter["inner"], "shift_invert_lanczos",
                          bool(np.all(rr <= tolerance_for(vals, tol))))


def smallest_eigs(form: DiscreteForm, m: int = 1, tol: float = 1e-9, seed: int = 0,
                  method: str = "auto", preconditioner="auto", maxiter: int | None = None) -> SpectrumResult:
    """The ``m`` smallest eigenpairs of ``(K, M)``.

    ``method``: ``auto`` (tridiagonal solver for 1D chains, dense LAPACK up to
    ``DENSE_LIMIT`` unknowns, LOBPCG beyond), ``dense``, ``tridiagonal``,
    ``lobpcg`` or ``shift_invert``. LOBPCG falls back to shift-invert Lanczos
    when it stagnates or exhausts its cap.
    """
    _check_form(form, m, tol)
    if method == "auto":
        if _is_tridiagonal(form.stiffness):
            method = "tridiagonal"
        elif form.size <= DENSE_LIMIT:
            method = "dense"
        else:
            method = "lobpcg"
    if method == "dense":
        return dense_eigs(form, m)
    if method == "tridiagonal":
        return tridiagonal_eigs(form, m)
    if method == "shift_invert":
        return shift_invert_lanczos(form, m, tol, preconditioner=preconditioner, seed=seed)
    if method != "lobpcg":
        raise ValueError(f"unknown method {method!r}")
    try:
        return lobpcg(form, m, tol, seed, maxiter, preconditioner)
    except ConvergenceError as exc:
        log.warning("%s; switching to shift-invert Lanczos", exc)
        res = shift_invert_lanczos(form, m, tol, preconditioner=preconditioner, seed=seed)
        if not res.converged:
            raise ConvergenceError("shift-invert Lanczos did not reach the tolerance", res) from exc
        return res


def rayleigh_quotient(form: DiscreteForm, u) -> float:
    u = np.asarray(u, dtype=float)
    if u.shape != (form.size,):
        raise ValueError(f"vector has shape {u.shape}, form has size {form.size}")
    den = float(u @ (form.mass * u))
    if den == 0.0:
        raise ValueError("Rayleigh quotient of the zero vector")
    return float(u @ (form.stiffness @ u)) / den


def gershgorin_lower_bound(form: DiscreteForm) -> float:
    """Cheap lower bound on the smallest eigenvalue of ``(K, M)``."""
    K = form.stiffness
    diag = K.diagonal()
    off = np.asarray(abs(K).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min((diag - off) / form.mass))


def solve_shifted(form: DiscreteForm, z: float, rhs, tol: float = 1e-10, maxiter: int | None = None,
                  preconditioner="jacobi") -> np.ndarray:
    """Solve ``(K - z M) u = rhs`` by preconditioned conjugate gradients.

    Jacobi preconditioning by default; ``fastdiag`` uses the exact shifted
    inverse of the flat form, which is much faster on straight-type forms.

    Raises :class:`IndefiniteShiftError` on a direction with ``p^T A p <= 0``,
    which proves that ``z`` is not below the spectrum.
    """
    b = np.asarray(rhs, dtype=float)
    if b.shape != (form.size,):
        raise ValueError("rhs size does not match the form")
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b)
    if z < gershgorin_lower_bound(form):
        log.debug("shift %.6g below the Gershgorin bound", z)
    A = (form.stiffness - z * sp.diags(form.mass)).tocsr()
    if preconditioner == "jacobi":
        dA = A.diagonal()
        if np.any(dA <= 0):
            raise IndefiniteShiftError("shifted matrix has a non-positive diagonal entry")
        Tinv = lambda r: r / dA  # noqa: E731
    else:
        Tinv = make_preconditioner(form, preconditioner, shift=z)
    cap = maxiter if maxiter is not None else 20 * form.size
    x = np.zeros_like(b)
    r = b.copy()
    zr = Tinv(r)
    p = zr.copy()
    rz = r @ zr
    for _ in range(cap):
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0.0:
            raise IndefiniteShiftError(f"non-positive curvature {curv:.3e}: shift {z} is not below the spectrum")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * nb:
            return x
        zr = Tinv(r)
        rz_new = r @ zr
        p = zr + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not reach {tol:g} in {cap} iterations")
