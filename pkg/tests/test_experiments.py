import json

import numpy as np
import pytest
from scipy.integrate import simpson

from stripspectra._numerics import plateau_prime
from stripspectra.experiments import (
    StudyConfig,
    Verdict,
    bent_bound_state,
    bent_trial_oracle,
    build_geometry,
    build_model,
    hardy_certificate,
    oracle_equivalence,
    profile_from_spec,
    quasimode_study,
    straight_strip_convergence,
    trial_search,
)
from stripspectra.stripgeom import AssumptionError

from _forms import bent_model, small_forms, straight_model

BENT = {"a": 1.0, "window": [-20, 20], "ds": 0.01, "kdot": {"type": "bump", "height": 0.5, "width": 4}}
TWIST = {"a": 1.0, "window": [-10, 10], "ds": 0.01, "theta_prime": {"type": "bump", "height": 1.0, "width": 4}}


def test_profile_specs():
    f, df = profile_from_spec({"type": "decay", "eps": 0.5})
    assert f(np.array([1.0]))[0] == pytest.approx(0.25)
    assert df(np.array([1.0]))[0] == pytest.approx(-0.25)
    f, _ = profile_from_spec({"type": "sum", "terms": [0.1, {"type": "constant", "value": 0.2}]})
    assert f(np.zeros(3)) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        profile_from_spec({"type": "bump", "height": 1, "width": 2, "colour": "red"})


def test_build_model_rejects_unknown_keys():
    with pytest.raises(ValueError):
        build_model(dict(BENT, shape="round"))


def test_geometric_model_from_circle_is_bent_not_twisted():
    geo = build_geometry({"a": 0.5, "window": [0, 3], "ds": 0.001,
                          "curve": {"family": "circle", "params": {"r": 1.0}, "dim": 2}})
    m = geo.model
    np.testing.assert_allclose(np.abs(m.kdotTheta[5:-5]), 1.0, rtol=1e-6)
    assert m.max_theta_prime < 1e-12


def test_ladder_must_refine():
    cfg = StudyConfig(BENT, [(10, 99, 9), (10, 99, 9)])
    with pytest.raises(ValueError):
        cfg.check_ladder()


def test_straight_study_small_ladder():
    cfg = StudyConfig({"a": 1.0, "window": [-10, 10]}, [(10, 49, 4), (10, 99, 9), (10, 199, 19)],
                      params={"rel_tol": 1e-2})
    v = straight_strip_convergence(cfg)
    assert v.passed
    assert all(3.5 <= r <= 4.5 for r in v.summary["ratios"])


def test_trial_oracle_straight_ground_mode_vanishes_transversally():
    # only the longitudinal kinetic energy of phi_n survives, and it tends to zero
    vals = [bent_trial_oracle(straight_model(S=200.0), n, 0.0, t_points=101, ds=0.01) for n in (4, 64)]
    assert vals[1] == pytest.approx(vals[0] * 4 / 64, rel=1e-8)
    assert vals[1] < 0.06


@pytest.mark.parametrize("n", [2, 4, 8])
def test_trial_oracle_decays_like_inverse_n(n):
    # the bend lives on |s| < 2, where phi_n' = 0 for n >= 2, and f is linear in t,
    # so h1[phi_n chi_1] = |phi_1'|^2 / n exactly
    x = np.linspace(-2, 2, 40001)
    norm = simpson(plateau_prime(x) ** 2, x=x)
    val = bent_trial_oracle(bent_model(S=20.0), n, 0.0, t_points=101, ds=0.002)
    assert n * val == pytest.approx(norm, rel=1e-6)


def test_trial_oracle_requires_sign_alignment():
    with pytest.raises(ValueError):
        bent_trial_oracle(bent_model(S=20.0), 4, 0.1, eta={"type": "bump", "height": -1.0, "width": 4.0})


def test_trial_oracle_eta_must_fit_window():
    with pytest.raises(ValueError):
        bent_trial_oracle(bent_model(S=5.0), 2, 0.1, eta={"type": "bump", "height": 1.0, "width": 40.0})


def test_trial_search_finds_negative_value():
    res = trial_search(bent_model(S=20.0), n_ladder=(16, 64), t_points=41, ds=0.02)
    assert res["value"] < 0


def test_bent_study_rejects_twist():
    spec = dict(BENT, theta_prime=0.1)
    with pytest.raises(AssumptionError):
        bent_bound_state(StudyConfig(spec, [(20, 199, 9)]))


def test_bent_study_small_mesh_binds():
    cfg = StudyConfig(BENT, [(20, 199, 9), (20, 399, 19)],
                      params={"s_ladder": [10, 20], "trial": False})
    v = bent_bound_state(cfg)
    assert v.summary["lambda1_finest"] < v.summary["E1"]
    assert v.summary["monotone_in_S"] and v.summary["bracketing_ok"]


def test_hardy_rejects_bent_model():
    with pytest.raises(AssumptionError):
        hardy_certificate(StudyConfig(BENT, [(10, 99, 9), (10, 199, 19)]))


def test_hardy_rejects_large_twist():
    spec = dict(TWIST, a=1.5)
    with pytest.raises(AssumptionError):
        hardy_certificate(StudyConfig(spec, [(10, 99, 9), (10, 199, 19)]))


def test_hardy_untwisted_has_no_weight():
    cfg = StudyConfig({"a": 1.0, "window": [-10, 10]}, [(5, 49, 9), (10, 199, 19)], params={"lambda_nt": 20})
    v = hardy_certificate(cfg)
    assert not v.passed
    # without twist the pencil floor comes only from the finite window
    assert v.summary["c_num"][-1] < 0.1


def test_quasimode_window_check():
    cfg = StudyConfig({"a": 1.0, "window": [-100, 100], "ds": 0.05}, [(100, 399, 9)])
    with pytest.raises(ValueError):
        quasimode_study(cfg, n_ladder=[4, 8, 16])


def test_quasimode_straight_strip_decreases():
    cfg = StudyConfig({"a": 1.0, "window": [-80, 80], "ds": 0.05}, [(80, 639, 9)])
    v = quasimode_study(cfg, n_ladder=[2, 4, 8])
    assert v.passed


def test_oracle_equivalence_on_small_forms():
    forms = [f for k, f in small_forms().items() if k != "effective_1d"]
    assert oracle_equivalence(forms[:2], m=3).passed


def test_verdict_write(tmp_path):
    v = Verdict("demo", True, 0.5, {"t": {"x": [1.0, 2.0], "y": [3.0, 4.0]}}, {"k": 1})
    files = v.write(tmp_path)
    names = {p.name for p in files}
    assert {"demo_verdict.json", "demo_t.csv", "demo_t.dat", "demo_summary.txt"} <= names
    assert json.loads((tmp_path / "demo_verdict.json").read_text())["passed"] is True
