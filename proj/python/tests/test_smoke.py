import math
import os
import pathlib

import numpy as np
import pytest

import safenav

ROOT = pathlib.Path(os.environ.get("SAFENAV_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))


def test_step_and_polar_error():
    p = safenav.step_nominal(safenav.Pose(0, 0, 0), safenav.VelocityCmd(1, 0), 0.05)
    assert p == safenav.Pose(0.05, 0, 0)
    e = safenav.polar_error(safenav.Pose(0, 0, 0), safenav.Pose(1, 0, 0))
    assert e.rho == pytest.approx(1.0)
    assert e.gamma == pytest.approx(0.0)


def test_tube_radius_config_a():
    b = safenav.DiscrepancyBounds(0.423, 0.025, 0.005, 3000)
    r = safenav.tube_radii(b)
    assert r.r0 == pytest.approx(0.090, rel=0.05)
    assert r.r_dt == pytest.approx(0.090, rel=0.05)


def test_tube_blowup_raises():
    with pytest.raises(safenav.TubeBlowUp):
        safenav.tube_radius(0.05, safenav.DiscrepancyBounds(0.5, 20.0))


def test_quantile():
    assert safenav.quantile_index(3000, 0.005) == 2986
    value, index = safenav.conformal_quantile([float(i) for i in range(1, 20)], 0.1)
    assert index == 18 and value == 18.0
    value, _ = safenav.conformal_quantile([1.0, 2.0], 0.01)
    assert math.isinf(value)


def test_train_and_calibrate_identity_is_zero():
    b, q = safenav.train_and_calibrate("identity", epsilon=0.01, duration=60.0)
    assert b.z_matched < 1e-9 and b.z_unmatched < 1e-9
    assert q > 0


def test_insufficient_data():
    with pytest.raises(safenav.InsufficientData):
        safenav.train_and_calibrate("experiment", duration=10.0)


def test_inflate_lethal_disc():
    occ = np.zeros((21, 21), dtype=np.uint8)
    occ[10, 10] = 100
    cost = safenav.inflate(occ, 2)
    assert cost.shape == (21, 21)
    assert cost[10, 12] == 13500.0
    assert cost[10, 13] < 13500.0
    assert cost[12, 12] < 13500.0
    assert np.all(cost >= 0)


def test_importance_weights_sum_to_one():
    rng = np.random.default_rng(0)
    w = safenav.importance_weights(list(rng.uniform(0, 1e4, 50)), list(rng.normal(size=50)), 0.1)
    assert sum(w) == pytest.approx(1.0, abs=1e-12)


def test_config_roundtrip_and_short_run():
    cfg = ROOT / "configs" / "smoke.json"
    text = safenav.serialize_config(str(cfg))
    assert '"name": "smoke"' in text
    m = safenav.run_config(str(cfg), laps=0.1)
    assert m["steps"] == 60
    assert m["contacts"] == 0
    assert m["n_eps"] > 0


def test_bad_config_reports_pointer(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"mppi": {"sigmaa": 1}}')
    with pytest.raises(safenav.ConfigError, match="/mppi/sigmaa"):
        safenav.serialize_config(str(bad))
