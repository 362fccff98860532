import math
import pathlib

import numpy as np
import pytest

import mfclab

CONFIGS = pathlib.Path(__file__).resolve().parents[2] / "configs"


def lq_value(t, x):
    tau = 1.0 - t
    return x * x / (2.0 * (1.0 + tau)) + 0.5 * math.log(1.0 + tau)


def test_listing_has_models_and_kinds():
    entries = mfclab.listing()
    names = {(e["category"], e["name"]) for e in entries}
    assert ("model", "LQ-decoupled") in names
    assert ("kind", "solve-hjb") in names


def test_wasserstein_matches_dirac_moment():
    mu = [[1.0, 0.0], [0.0, -2.0], [3.0, 1.0]]
    dirac = [[0.0, 0.0]] * 3
    for r in (1.0, 2.0):
        assert mfclab.wasserstein(mu, dirac, r) == pytest.approx(mfclab.moment(mu, r) ** (1.0 / r), abs=1e-12)
    assert sorted(mfclab.optimal_assignment(mu, mu[::-1], 2.0)) == [0, 1, 2]


def test_expressions():
    assert mfclab.evaluate_expression("x[0] + m2", [1.0], [[1.0], [3.0]]) == 6.0
    assert mfclab.render_expression("((1 + x[0]))") == "1+x[0]"
    with pytest.raises(ValueError):
        mfclab.evaluate_expression("x[0] +", [1.0], [[1.0]])


def test_model_errors_are_config_errors():
    assert mfclab.model("LQ-decoupled")["UT"] == "m2/2"
    with pytest.raises(mfclab.ConfigError):
        mfclab.model({"registry": "LQ-decoupled", "bogus": 1})
    with pytest.raises(ValueError):
        mfclab.model("no-such-model")


def test_hjb_solve_against_closed_form():
    u = mfclab.solve_hjb("LQ-decoupled", 1, {"lower": -3.0, "upper": 3.0, "points": 121})
    assert u.times[0] == 0.0 and u.times[-1] == 1.0
    assert u.value(0.0, [[1.0]]) == pytest.approx(lq_value(0.0, 1.0), abs=2e-3)
    assert u.slice(len(u.times) - 1).shape == (121,)
    assert mfclab.riccati_lq_value(1.0, 1.0, 1.0, 0.0, [[1.0]]) == pytest.approx(lq_value(0.0, 1.0), abs=1e-8)


def test_simulation_shapes_and_cost():
    states, alive = mfclab.simulate("LQ-decoupled", [[0.0], [1.0]], steps=10, n_paths=50, seed=3)
    assert states.shape == (50, 11, 2, 1)
    assert alive.all()
    # Common noise: both particles move by the same increment.
    assert np.allclose(states[:, :, 1, 0] - states[:, :, 0, 0], 1.0)
    est = mfclab.zero_control_cost("LQ-decoupled", [[1.0]], steps=20, n_paths=20000, seed=1)
    assert abs(est["mean"] - 1.0) <= 4.0 * est["std_error"]


def test_smoothing_is_deterministic():
    a = mfclab.smooth_eval("tanh-mix", 4, [0.2], [[0.0], [1.0]], mc_reps=200, seed=5)
    b = mfclab.smooth_eval("tanh-mix", 4, [0.2], [[0.0], [1.0]], mc_reps=200, seed=5)
    assert a == b
    c = mfclab.smooth_eval({"expr": "7"}, 4, [0.2], [[0.0]], mc_reps=50)
    assert c == (7.0, 0.0)


def test_run_config(tmp_path):
    code, out, err = mfclab.run(CONFIGS / "lq_acceptance.json", out=tmp_path / "lq")
    assert code == 0, err
    assert out.startswith("t,x,value")
    assert (tmp_path / "lq" / "manifest.json").exists()
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": ')
    code, _, err = mfclab.run(bad, out=tmp_path / "bad")
    assert code == 2
    assert "malformed JSON" in err
