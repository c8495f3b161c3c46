import numpy as np
import pytest
import scipy.sparse as sp

from stripspectra.discretize import (
    Mesh1D,
    Mesh2D,
    assemble_2d,
    assemble_effective_1d,
    assemble_straight_type,
    chain_laplacian,
    discrete_chi1,
    discrete_threshold,
    read_matrix_market,
)
from stripspectra.eigensolve import dense_eigs

from _forms import bent_model, mixed_model, straight_model


def straight_discrete_exact(S, a, ns, nt):
    hs, ht = 2 * S / (ns + 1), 2 * a / (nt + 1)
    return 4 / hs**2 * np.sin(np.pi * hs / (4 * S)) ** 2 + 4 / ht**2 * np.sin(np.pi * ht / (4 * a)) ** 2


def test_mesh_steps_and_refinement():
    m = Mesh2D(10.0, 1.0, 199, 19)
    assert m.hs == pytest.approx(0.1) and m.ht == pytest.approx(0.1)
    r = m.refined()
    assert r.hs == pytest.approx(m.hs / 2)
    np.testing.assert_allclose(r.s_nodes()[1::2], m.s_nodes())


def test_mesh_rejects_tiny_counts():
    with pytest.raises(ValueError):
        Mesh2D(1.0, 1.0, 3, 10)


def test_straight_form_matches_separable_exact_eigenvalue():
    mesh = Mesh2D(10.0, 1.0, 79, 19)
    lam = dense_eigs(assemble_2d(straight_model(), mesh), 1).eigenvalues[0]
    assert lam == pytest.approx(straight_discrete_exact(10.0, 1.0, 79, 19), rel=1e-12)


def test_stiffness_symmetric_and_mass_positive():
    form = assemble_2d(bent_model(), Mesh2D(8.0, 1.0, 39, 9))
    K = form.stiffness
    assert abs(K - K.T).max() < 1e-14
    assert np.all(form.mass > 0)


def test_parts_sum_to_stiffness():
    form = assemble_2d(mixed_model(), Mesh2D(6.0, 0.5, 39, 9))
    K1, K2 = form.parts
    assert abs(K1 + K2 - form.stiffness).max() < 1e-12


def test_neumann_threshold_equals_discrete_e1():
    form = assemble_2d(straight_model(), Mesh2D(5.0, 1.0, 19, 9), "neumann")
    lam = dense_eigs(form, 1).eigenvalues[0]
    assert lam == pytest.approx(discrete_threshold(1.0, 9), rel=1e-12)


def test_window_must_be_covered():
    with pytest.raises(ValueError):
        assemble_2d(straight_model(S=5.0), Mesh2D(8.0, 1.0, 39, 9))


def test_half_width_must_match():
    with pytest.raises(ValueError):
        assemble_2d(straight_model(a=1.0), Mesh2D(5.0, 0.5, 39, 9))


def test_chi1_is_discrete_ground_mode():
    a, nt = 0.7, 30
    chi = discrete_chi1(a, nt)
    mesh = Mesh1D(-a, a, nt)
    L = chain_laplacian(mesh).toarray() / mesh.h
    np.testing.assert_allclose(L @ chi, discrete_threshold(a, nt) * chi, atol=1e-9)
    assert np.sum(chi**2) * 2 * a / (nt + 1) == pytest.approx(1.0)


def test_straight_type_with_potential():
    mesh = Mesh2D(4.0, 1.0, 39, 9)
    form = assemble_straight_type(mesh, lambda s: 0.25 * np.ones_like(s))
    lam = dense_eigs(form, 1).eigenvalues[0]
    assert lam == pytest.approx(straight_discrete_exact(4.0, 1.0, 39, 9) + 0.25, rel=1e-12)


def test_effective_1d_is_tridiagonal():
    form = assemble_effective_1d(mixed_model(), Mesh1D.symmetric(10.0, 99))
    K = sp.csr_matrix(form.stiffness)
    rows, cols = K.nonzero()
    assert np.max(np.abs(rows - cols)) == 1


def test_matrix_market_export_round_trip(tmp_path):
    form = assemble_2d(bent_model(), Mesh2D(4.0, 1.0, 19, 5))
    kp, mp, jp = form.export(tmp_path / "bent")
    K = read_matrix_market(kp)
    assert abs(K - form.stiffness).max() == 0.0
    M = read_matrix_market(mp)
    np.testing.assert_array_equal(M.diagonal(), form.mass)
    assert jp.exists()
