import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.models.scenario_models import EkfConfig
from app.services.base import AnchorCollisionError
from app.services.ekf_service import (
    DEFAULT_ANCHORS,
    ekf_step_model,
    motion,
    motion_jacobian,
    range_jacobian,
    ranges,
    run_ekf_localization,
    simulate_ranges,
    waypoint_truth,
)


def _finite_difference(fn, x, step=1e-6):
    columns = []
    for i in range(x.shape[0]):
        offset = np.zeros_like(x)
        offset[i] = step
        columns.append((fn(x + offset) - fn(x - offset)) / (2 * step))
    return np.column_stack(columns)


def test_range_of_a_three_four_five_triangle():
    anchors = np.array([[3.0], [4.0]])
    x = np.zeros(4)
    assert_allclose(ranges(x, anchors), [5.0])
    assert_allclose(range_jacobian(x, anchors), [[0.0, 0.0, -0.6, -0.8]])


def test_motion_jacobian_at_rest_ignores_heading():
    jac = motion_jacobian(np.array([0.0, 0.7, 1.0, 2.0]), 0.1)
    assert_allclose(jac[:, 1], [0.0, 1.0, 0.0, 0.0])
    assert_allclose(jac[3, 3], 1.0)
    assert_allclose(jac[3, 2], 0.0)


def test_jacobians_match_finite_differences(rng):
    for _ in range(10):
        x = np.concatenate([rng.uniform(0.5, 2.0, 1), rng.uniform(-np.pi, np.pi, 1), rng.uniform(1.0, 9.0, 2)])
        model = ekf_step_model(x, DEFAULT_ANCHORS, 0.1)
        assert np.max(np.abs(model.F_jacobian - _finite_difference(model.predict_fn, x))) < 1e-5
        assert np.max(np.abs(model.H_jacobian - _finite_difference(model.range_fn, x))) < 1e-5


def test_motion_moves_along_heading():
    assert_allclose(motion(np.array([2.0, np.pi / 2, 1.0, 1.0]), 0.5), [2.0, np.pi / 2, 1.0, 2.0], atol=1e-12)


def test_anchor_collision_is_reported():
    with pytest.raises(AnchorCollisionError):
        ekf_step_model(np.array([1.0, 0.0, 10.0, 8.0]))


def test_waypoint_truth_follows_the_loop():
    truth = waypoint_truth(200, 0.1, 1.0)
    assert truth.shape == (201, 4)
    assert_allclose(truth[0], [1.0, 0.0, 2.0, 2.0])
    assert_allclose(truth[60, 2:], [8.0, 2.0], atol=1e-9)
    assert_allclose(truth[80, 2:], [8.0, 4.0], atol=1e-9)
    assert truth[80, 1] == pytest.approx(np.pi / 2)
    # one full lap is 20 m
    assert_allclose(truth[200, 2:], truth[0, 2:], atol=1e-9)


def test_simulated_ranges_are_reproducible():
    cfg = EkfConfig(seed=4, steps=20)
    truth, first = simulate_ranges(cfg)
    _, second = simulate_ranges(cfg)
    assert first.shape == (21, 5)
    assert np.array_equal(first, second)
    assert np.max(np.abs(first - np.vstack([ranges(x, DEFAULT_ANCHORS) for x in truth]))) < 2.0


def test_raw_run_releases_every_range():
    cfg = EkfConfig(steps=30)
    run = run_ekf_localization(cfg, sanitize=False)
    assert run.estimates.shape == (31, 4)
    assert set(run.M_used[1:]) == {5}
    assert run.location_rmse < 1.0


def test_default_privacy_is_trace_over_heading_and_location():
    spec = EkfConfig().privacy_spec()
    assert spec.map_A.tolist() == [[1.0, 1.0, 1.0]]
    assert spec.private_idx == [1, 2, 3]
    assert float(np.sum(spec.floor())) == pytest.approx(2.0)


def test_sanitized_run_hides_location_but_keeps_speed():
    # location-only floor
    cfg = EkfConfig(seed=0, privacy_map="positions", delta=1.0)
    data = simulate_ranges(cfg)
    sanitized = run_ekf_localization(cfg, sanitize=True, data=data)
    raw = run_ekf_localization(cfg, sanitize=False, data=data)
    assert sanitized.location_rmse >= 3 * raw.location_rmse
    assert sanitized.speed_rmse <= 1.5 * raw.speed_rmse
