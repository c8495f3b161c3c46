import numpy as np
import pytest

from stripspectra.curves import SGrid, make_analytic_curve
from stripspectra.experiments import complete_normals
from stripspectra.frames import build_rpaf
from stripspectra.stripgeom import (
    AssumptionError,
    StripModel,
    TwistProfile,
    centerline_geodesic_curvature,
    check_injectivity,
    embed,
    gauss_curvature,
    jacobian_f,
    make_strip,
    validate,
)

from _forms import bent_model, twisted_model


def test_constant_twist_jacobian():
    m = StripModel.direct(1.0, SGrid.spanning(-1, 1, 0.1), 0.0, 2.0)
    assert jacobian_f(m, 3, 0.5) == pytest.approx(np.sqrt(2.0))


def test_jacobian_bent_only_is_linear():
    m = StripModel.direct(1.0, SGrid.spanning(-1, 1, 0.1), 0.4, 0.0)
    assert jacobian_f(m, 0, 0.5) == pytest.approx(0.8)
    assert jacobian_f(m, 0, -0.5) == pytest.approx(1.2)


def test_gauss_curvature_matches_metric_formula():
    # metric f^2 ds^2 + dt^2 has Gauss curvature -f_tt / f
    m = StripModel.direct(0.8, SGrid.spanning(-1, 1, 0.1), 0.7, 1.3)
    t, h = 0.3, 1e-4
    f = lambda x: m.f(0.0, x)  # noqa: E731
    ftt = (f(t + h) - 2 * f(t) + f(t - h)) / h**2
    assert gauss_curvature(m, 10, t) == pytest.approx(-ftt / f(t), rel=1e-6)


def test_t_outside_strip_is_rejected():
    m = StripModel.direct(0.5, SGrid.spanning(-1, 1, 0.1))
    with pytest.raises(ValueError):
        jacobian_f(m, 0, 0.6)


def test_assumption_violation_raises():
    with pytest.raises(AssumptionError):
        StripModel.direct(1.0, SGrid.spanning(-1, 1, 0.1), 1.0)


def test_validate_flags():
    rep = validate(bent_model())
    assert rep.flags["ass21_ok"] and rep.flags["asymptotically_flat_ok"]
    rep = validate(StripModel.direct(1.0, SGrid.spanning(-5, 5, 0.1), 0.5))
    assert not rep.flags["asymptotically_flat_ok"]
    rep = validate(twisted_model(a=1.5))
    assert not rep.flags["hardy_smallness_ok"]
    assert "hardy_smallness_ok" in rep.to_dict()["violated"]


def test_validate_width_override_reports_violation():
    m = StripModel.direct(0.5, SGrid.spanning(-1, 1, 0.1), 1.0)
    rep = validate(m, a=1.2)
    assert not rep.flags["ass21_ok"]
    assert rep.values["a_max_kdotTheta"] == pytest.approx(1.2)


def test_twist_profile_rotating_has_constant_rate():
    g = SGrid.spanning(0, 5, 0.01)
    tw = TwistProfile.rotating(g, 3, 0.7)
    np.testing.assert_allclose(np.linalg.norm(tw.theta, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(tw.abs_theta_prime, 0.7, atol=1e-12)


def test_twist_profile_rejects_non_unit():
    g = SGrid.spanning(0, 1, 0.5)
    with pytest.raises(ValueError):
        TwistProfile(g, np.ones((3, 2)), np.zeros((3, 2)))


def _helix_strip(a=0.3, rate=0.0, L=8.0):
    g = SGrid.spanning(0.0, L, 0.005)
    c = make_analytic_curve("helix", {"r": 1.0, "h": 1.0}, 3, g)
    fr = build_rpaf(c, complete_normals(c.tangents[0]))
    tw = TwistProfile.rotating(g, 2, rate)
    return c, fr, tw, make_strip(fr, tw, a)


def test_make_strip_profiles_from_helix():
    _, fr, tw, m = _helix_strip(rate=0.4)
    np.testing.assert_allclose(m.absThetaPrime, 0.4, atol=1e-10)
    # |k.Theta| never exceeds the curvature 1/2
    assert np.max(np.abs(m.kdotTheta)) <= 0.5 + 1e-6


def test_embedding_centerline_geodesic_curvature_is_k_dot_theta():
    c, fr, tw, m = _helix_strip()
    surf = embed(m, fr, tw, 11, c)
    kg = centerline_geodesic_curvature(surf)
    inner = slice(20, -20)
    np.testing.assert_allclose(np.abs(kg[inner]), np.abs(m.kdotTheta[inner]), atol=1e-4)


def test_embedding_is_injective_for_narrow_strip(tmp_path):
    c, fr, tw, m = _helix_strip(a=0.2, L=4.0)
    surf = embed(m, fr, tw, 9, c)
    rep = check_injectivity(surf, 0.01)
    assert rep.ok
    surf.write_obj(tmp_path / "s.obj")
    text = (tmp_path / "s.obj").read_text()
    assert text.count("\nf ") == len(surf.triangles)
