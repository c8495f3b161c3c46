import numpy as np
import pytest

from stripspectra.curves import (
    CurvatureVector,
    SGrid,
    curvature_of,
    make_analytic_curve,
    read_curve_csv,
    synthesize_from_curvature,
    write_curve_csv,
)


def test_grid_spanning_hits_endpoints():
    g = SGrid.spanning(-2.0, 3.0, 0.25)
    assert g.count == 21
    assert g.end == pytest.approx(3.0)
    assert g.index_of(0.0) == 8


def test_grid_rejects_bad_step():
    with pytest.raises(ValueError):
        SGrid(0.0, -1.0, 10)


@pytest.mark.parametrize("r", [0.5, 2.0])
def test_circle_curvature_is_inverse_radius(r):
    g = SGrid.spanning(0.0, 5.0, 1e-3)
    c = make_analytic_curve("circle", {"r": r}, 2, g)
    kappa = curvature_of(c)
    np.testing.assert_allclose(kappa[5:-5], 1.0 / r, rtol=1e-6)


def test_helix_unit_speed_and_curvature():
    g = SGrid.spanning(0.0, 10.0, 1e-3)
    c = make_analytic_curve("helix", {"r": 1.0, "h": 1.0}, 3, g)
    np.testing.assert_allclose(np.linalg.norm(c.tangents, axis=1), 1.0, atol=1e-14)
    # kappa = r / (r^2 + h^2)
    np.testing.assert_allclose(curvature_of(c)[5:-5], 0.5, rtol=1e-6)


def test_line_in_higher_dimension_is_straight():
    g = SGrid.spanning(0.0, 1.0, 0.01)
    c = make_analytic_curve("line", {}, 5, g)
    assert np.max(curvature_of(c)) < 1e-12


def test_unknown_family():
    with pytest.raises(ValueError):
        make_analytic_curve("spiral", {}, 3, SGrid.spanning(0, 1, 0.1))


def test_synthesis_reproduces_circle():
    g = SGrid.spanning(0.0, np.pi, 1e-3)
    k = CurvatureVector(g, np.full(g.count, 2.0))
    curve, frame = synthesize_from_curvature(k, np.eye(2))
    # radius 1/2 circle: the tangent turns at rate 2
    L = g.end
    np.testing.assert_allclose(curve.tangents[-1], [np.cos(2 * L), np.sin(2 * L)], atol=1e-8)
    np.testing.assert_allclose(curve.points[-1], [0.5 * np.sin(2 * L), 0.5 - 0.5 * np.cos(2 * L)], atol=1e-6)
    assert frame.orthonormality_drift() < 1e-10


def test_curvature_vector_rejects_nan():
    g = SGrid.spanning(0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        CurvatureVector(g, [0.0, np.nan, 1.0])


def test_curve_csv_round_trip(tmp_path):
    g = SGrid.spanning(0.0, 2.0, 0.01)
    c = make_analytic_curve("helix", {"r": 0.7, "h": 0.3}, 3, g)
    write_curve_csv(c, tmp_path / "c.csv")
    back = read_curve_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(back.points, c.points)
    np.testing.assert_array_equal(back.tangents, c.tangents)
    assert back.grid.count == g.count
