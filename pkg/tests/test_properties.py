"""Property tests for the structural invariants of the geometry and the discrete forms."""

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from stripspectra._numerics import richardson
from stripspectra.curves import SGrid
from stripspectra.discretize import Mesh2D, assemble_2d, discrete_threshold
from stripspectra.eigensolve import dense_eigs, lobpcg, rayleigh_quotient
from stripspectra.io import read_table, write_table
from stripspectra.stripgeom import StripModel, TwistProfile, jacobian_from_profiles

from _forms import bent_model

half_widths = st.floats(0.1, 2.0)
unit = st.floats(-0.99, 0.99)


@given(a=half_widths, x=unit, tp=st.floats(0.0, 5.0))
def test_jacobian_positive_and_convex_in_t(a, x, tp):
    kd = x / a  # keeps a |k.Theta| < 1
    t = np.linspace(-a, a, 201)
    f = jacobian_from_profiles(kd, tp, t)
    assert np.all(f >= 1.0 - a * abs(kd) - 1e-12)
    assert np.all(np.diff(f, 2) >= -1e-12)


@given(a=half_widths, x=unit, tp=st.floats(0.0, 5.0), u=st.floats(-1.0, 1.0))
def test_gauss_curvature_non_positive(a, x, tp, u):
    kd = x / a
    t = a * u
    f = jacobian_from_profiles(kd, tp, t)
    assert -(tp**2) / f**4 <= 0.0


@given(a=half_widths, nt=st.integers(4, 200))
def test_discrete_threshold_below_continuum(a, nt):
    assert discrete_threshold(a, nt) <= (np.pi / (2 * a)) ** 2 * (1 + 1e-14)


@given(h=st.floats(0.0, 0.5), seed=st.integers(0, 10))
def test_stiffness_symmetric_and_positive(h, seed):
    m = StripModel.direct(1.0, SGrid.spanning(-4, 4, 0.05), lambda s: h * np.exp(-s * s),
                          lambda s: h * np.exp(-s * s))
    f = assemble_2d(m, Mesh2D(3.0, 1.0, 19, 5))
    K = f.stiffness
    assert abs(K - K.T).max() < 1e-14
    u = np.random.default_rng(seed).standard_normal(f.size)
    assert u @ (K @ u) > 0


@given(h=st.floats(0.05, 0.6))
def test_neumann_below_dirichlet(h):
    m = StripModel.direct(1.0, SGrid.spanning(-6, 6, 0.05), lambda s: h * np.exp(-s * s))
    mesh = Mesh2D(5.0, 1.0, 49, 7)
    d = dense_eigs(assemble_2d(m, mesh), 1).eigenvalues[0]
    n = dense_eigs(assemble_2d(m, mesh, "neumann"), 1).eigenvalues[0]
    assert n <= d + 1e-12


@given(h=st.floats(0.0, 0.6))
def test_domain_monotonicity(h):
    # nested Dirichlet windows at fixed steps: eigenvalue cannot increase with S
    m = StripModel.direct(1.0, SGrid.spanning(-8, 8, 0.05), lambda s: h * np.exp(-s * s))
    lam = [dense_eigs(assemble_2d(m, Mesh2D(S, 1.0, int(round(2 * S / 0.25)) - 1, 7)), 1).eigenvalues[0]
           for S in (2.0, 4.0, 8.0)]
    assert lam[0] >= lam[1] - 1e-12 >= lam[2] - 2e-12


@given(tp=st.floats(0.0, 1.4))
def test_twist_raises_spectrum_above_discrete_threshold(tp):
    # Poincare floor: an unbent strip has no spectrum below the transverse threshold
    m = StripModel.direct(1.0, SGrid.spanning(-4, 4, 0.05), 0.0, lambda s: tp * np.exp(-s * s))
    mesh = Mesh2D(3.0, 1.0, 23, 7)
    lam = dense_eigs(assemble_2d(m, mesh, "neumann"), 1).eigenvalues[0]
    assert lam >= discrete_threshold(1.0, 7) - 1e-10


@given(seed=st.integers(0, 2**32 - 1))
def test_ritz_values_ordered_and_bounded(seed):
    f = assemble_2d(bent_model(S=6.0), Mesh2D(4.0, 1.0, 31, 7))
    res = lobpcg(f, 3, tol=1e-9, seed=seed)
    assert np.all(np.diff(res.eigenvalues) >= -1e-12)
    u = np.random.default_rng(seed).standard_normal(f.size)
    assert rayleigh_quotient(f, u) >= res.eigenvalues[0] - 1e-10


@given(seed=st.integers(0, 100))
def test_eigensolve_deterministic(seed):
    f = assemble_2d(bent_model(S=6.0), Mesh2D(4.0, 1.0, 31, 7))
    a = lobpcg(f, 2, seed=seed)
    b = lobpcg(f, 2, seed=seed)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)


@given(st.lists(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=3, max_size=3),
                min_size=1, max_size=20))
def test_csv_round_trip_bit_identical(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    data = np.array(rows, dtype=float)
    write_table(path, ["a", "b", "c"], data)
    header, back = read_table(path)
    assert header == ["a", "b", "c"]
    assert np.array_equal(back, data)


@given(rate=st.floats(-3.0, 3.0), phase=st.floats(0.0, 6.0))
def test_twist_profile_unit_norm(rate, phase):
    tw = TwistProfile.rotating(SGrid.spanning(0, 2, 0.01), 3, rate, phase)
    np.testing.assert_allclose(np.linalg.norm(tw.theta, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(tw.abs_theta_prime, abs(rate), atol=1e-12)


@given(exact=st.floats(-10, 10), c=st.floats(-5, 5), h=st.floats(0.01, 0.5))
def test_richardson_removes_quadratic_error(exact, c, h):
    coarse = exact + c * h * h
    fine = exact + c * (h / 2) ** 2
    assert abs(richardson(coarse, fine, 2.0) - exact) <= 1e-9 * (1 + abs(exact) + abs(c))
