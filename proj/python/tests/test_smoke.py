import math

import numpy as np
import pytest

import nonhyp


def test_model_map_and_conditions():
    f = nonhyp.builtin_map("model")
    assert f.dimension == 2
    np.testing.assert_allclose(f.forward([0.1, 0.1]), [0.1 - 0.001, 0.1 + 0.001])
    records = {r["name"]: r for r in nonhyp.check_conditions(f, delta=1e-2, samples=2000, seed=1)}
    for name in ("C1", "C5", "C6", "C7", "C8.1", "C8.2"):
        assert records[name]["pass"], name
        assert records[name]["margin"] > 0


def test_linear_shadow_matches_closed_form():
    f = nonhyp.linear_diagonal([0.5, 2.0], 1)
    pts = nonhyp.generate_pseudotrajectory(f, [0.3, 0.0], 20, 1e-3, seed=4)
    assert pts.shape == (21, 2)
    res = nonhyp.find_shadow_point(f, pts, 1e-2)
    assert res["converged"]
    unstable = pts[0, 1] + sum(0.5 ** (k + 1) * (pts[k + 1, 1] - 2 * pts[k, 1]) for k in range(20))
    np.testing.assert_allclose(res["shadow_point"], [pts[0, 0], unstable], atol=1e-10)
    assert res["deviation"] == nonhyp.orbit_deviation(f, res["shadow_point"], pts)


def test_horseshoe_periodic_points():
    sys = nonhyp.homoclinic_system()
    k = nonhyp.auto_tune_k(sys, seed=1)
    assert sys.k == k
    rep = nonhyp.verify_contraction(sys, trials=20, seed=2)
    assert rep["pass"] and rep["max_ratio"] <= 0.5
    for word in nonhyp.primitive_words(2) + ["0", "1"]:
        p = nonhyp.find_periodic_point(sys, word)
        assert p["residual"] <= 1e-8
    fit = nonhyp.coding_fit(sys)
    assert -1.2 <= fit["slope"] <= -0.8


def test_tangency_flattening():
    res = nonhyp.flatten_tangency([0.5], [2.0], "cbrt(zeta)", delta=lambda xi: xi)
    assert res["flattening_pass"]
    assert res["identity_decreasing"] and res["tau_in_unit_interval"]
    assert res["r0"] == pytest.approx(0.5)
    assert res["disk_admissible"]
    assert nonhyp.matrix_log([[2.0]])["P"][0, 0] == pytest.approx(math.log(2.0))
    with pytest.raises(ValueError):
        nonhyp.matrix_log([[0.5]])


def test_z_form_counterexample():
    assert nonhyp.z_form(1, 1.0, -1.0) == 1.0


def test_run_experiment_and_verify(tmp_path):
    out = tmp_path / "cond.json"
    manifest = nonhyp.run_experiment("conditions", {"samples": 500, "out": str(out)})
    assert manifest["exit_code"] == 0
    assert nonhyp.verify_manifest(manifest["path"])["ok"]
    with pytest.raises(ValueError, match="bogus"):
        nonhyp.run_experiment("conditions", {"bogus": 1})
