import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.models.filter_models import CompressionPlan, GaussianBelief
from app.models.privacy_models import AutoLookahead, FixedLookahead, PrivacySpec, privacy_map_matrix
from app.services.base import NoFiniteBoundError
from app.services.kalman_service import compressed_update, n_step_cov
from app.services.privacy_service import (
    all_thresholds,
    carried_lookahead,
    error_reduction,
    lookahead_depth,
    loss_thresholds,
    min_lookahead,
    privacy_loss,
    private_error,
    public_error_trace,
    step_geometry,
    utility,
)
from tests.conftest import make_psd


def test_error_reduction_matches_filter_path_on_random_instances():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        L = int(rng.integers(2, 7))
        N = int(rng.integers(1, 9))
        depth = int(rng.integers(0, 4))
        pred = GaussianBelief(mean=np.zeros(L), cov=make_psd(rng, L), stage="predicted")
        H = rng.standard_normal((N, L))
        R = make_psd(rng, N)
        Fs = [rng.standard_normal((L, L)) / np.sqrt(L) for _ in range(depth)]
        Qs = [make_psd(rng, L) for _ in range(depth)]
        plan = CompressionPlan(matrix=rng.standard_normal((int(rng.integers(1, N + 1)), N)))
        geom = step_geometry(pred, H, R, Fs, Qs)
        post = compressed_update(pred, np.zeros(N), H, R, plan)
        for n in range(depth + 1):
            expected = n_step_cov(pred.cov, Fs[:n], Qs[:n]) - n_step_cov(post.cov, Fs[:n], Qs[:n])
            worst = max(worst, float(np.max(np.abs(error_reduction(geom, plan, n) - expected))))
    assert worst < 1e-8


def test_step_geometry_shapes(small_problem):
    pred, H, R, Fs, Qs, _ = small_problem
    geom = step_geometry(pred, H, R, Fs, Qs)
    assert geom.depth == 1
    assert geom.n_meas == 4
    assert geom.G_by_n[1].shape == (4, 4)
    assert_allclose(geom.P_pred_by_n[1], Fs[0] @ pred.cov @ Fs[0].T + Qs[0], atol=1e-12)


def test_discard_plan_has_zero_utility_and_loss(small_problem):
    pred, H, R, Fs, Qs, spec = small_problem
    geom = step_geometry(pred, H, R, Fs, Qs)
    plan = CompressionPlan.discard(4, True)
    assert utility(geom, plan, spec) == 0.0
    assert_allclose(privacy_loss(geom, plan, spec, 1), np.zeros(1))


def test_loss_matches_mapped_variance_drop(small_problem):
    pred, H, R, Fs, Qs, spec = small_problem
    geom = step_geometry(pred, H, R, Fs, Qs)
    plan = CompressionPlan.identity(4)
    post = compressed_update(pred, np.zeros(4), H, R, plan)
    drop = private_error(pred.cov, spec) - private_error(post.cov, spec)
    assert_allclose(privacy_loss(geom, plan, spec, 0), drop, atol=1e-10)
    gain = public_error_trace(pred.cov, spec) - public_error_trace(post.cov, spec)
    assert utility(geom, plan, spec) == pytest.approx(gain, abs=1e-10)


def test_thresholds_subtract_the_floor(small_problem):
    pred, H, R, Fs, Qs, spec = small_problem
    geom = step_geometry(pred, H, R, Fs, Qs)
    expected = np.trace(pred.cov[2:, 2:]) - 2 * spec.delta
    assert_allclose(loss_thresholds(geom, spec, 0), [expected])
    assert all_thresholds(geom, spec).shape == (2, 1)


def test_elementwise_map_gives_one_row_per_private_state():
    spec = PrivacySpec.partitioned(1, 3, delta=1.0, privacy_map="elementwise")
    assert spec.n_maps == 3
    assert_allclose(spec.floor(), np.ones(3))
    assert_allclose(privacy_map_matrix("trace", 2), [[1.0, 1.0]])


def test_spec_rejects_overlapping_indices():
    with pytest.raises(ValueError):
        PrivacySpec(public_idx=[0, 1], private_idx=[1], map_A=[[1.0]], delta=1.0)


def test_spec_rejects_negative_map():
    with pytest.raises(ValueError):
        PrivacySpec(public_idx=[0], private_idx=[1], map_A=[[-1.0]], delta=1.0)


def test_min_lookahead_zero_when_prior_already_clears_floor():
    spec = PrivacySpec.partitioned(1, 4, delta=1.0)
    assert min_lookahead(spec, nu=2.0, xi=1.0, epsilon=2.0) == 0


def test_min_lookahead_scans_with_unit_xi():
    # bound(r) = 4 (2 r + 0.01) must reach 4 δ = 40
    spec = PrivacySpec.partitioned(1, 4, delta=10.0)
    r = min_lookahead(spec, nu=0.01, xi=1.0, epsilon=2.0)
    assert r == 4
    assert 4 * (2 * (r + 1) + 0.01) >= 40
    assert 4 * (2 * r + 0.01) < 40


def test_min_lookahead_without_finite_bound():
    spec = PrivacySpec.partitioned(1, 1, delta=10.0)
    with pytest.raises(NoFiniteBoundError):
        min_lookahead(spec, nu=0.1, xi=0.5, epsilon=1.0)


def test_min_lookahead_is_non_decreasing_in_delta():
    depths = [
        min_lookahead(PrivacySpec.partitioned(1, 4, delta=d), nu=0.05, xi=1.0, epsilon=2.0)
        for d in range(1, 11)
    ]
    assert depths == sorted(depths)


def test_lookahead_depth_follows_policy():
    pred = GaussianBelief(mean=np.zeros(2), cov=0.5 * np.eye(2), stage="predicted")
    fixed = PrivacySpec.partitioned(1, 1, delta=1.0, lookahead=FixedLookahead(depth=3))
    assert lookahead_depth(fixed, pred) == 3
    auto = fixed.with_lookahead(AutoLookahead(xi=1.0, epsilon=1.0))
    assert lookahead_depth(auto, pred) == min_lookahead(auto, 0.5, 1.0, 1.0)


def test_auto_lookahead_protects_the_next_step_when_prior_is_loose():
    # ν = 5 clears 4 δ = 16 at r = 0, but after the update only ε = 2 per step is guaranteed
    pred = GaussianBelief(mean=np.zeros(5), cov=5.0 * np.eye(5), stage="predicted")
    spec = PrivacySpec.partitioned(1, 4, delta=4.0, lookahead=AutoLookahead(xi=1.0, epsilon=2.0))
    assert min_lookahead(spec, 5.0, 1.0, 2.0) == 0
    assert lookahead_depth(spec, pred) == 1


@pytest.mark.parametrize("delta, expected", [(1.0, 0), (4.0, 1), (10.0, 4)])
def test_carried_lookahead_counts_steps_of_process_noise(delta, expected):
    # bound from ν = ε = 2 over a 4-state trace floor: 4 (2 r + 2) >= 4 δ
    spec = PrivacySpec.partitioned(1, 4, delta=delta)
    assert carried_lookahead(spec, xi=1.0, epsilon=2.0) == expected


def test_min_lookahead_validates_before_returning_zero():
    # ν already clears δ = 1, but ν = 5 is above the saturation level ε / (1 − ξ) = 2
    spec = PrivacySpec.partitioned(1, 1, delta=1.0)
    with pytest.raises(NoFiniteBoundError):
        min_lookahead(spec, nu=5.0, xi=0.5, epsilon=1.0)
    with pytest.raises(ValueError):
        min_lookahead(spec, nu=5.0, xi=1.0, epsilon=0.0)


def test_n_step_covariance_respects_the_noise_driven_bound():
    rng = np.random.default_rng(5)
    for _ in range(30):
        L = int(rng.integers(2, 6))
        depth = int(rng.integers(1, 5))
        P = make_psd(rng, L)
        Fs = [np.linalg.qr(rng.standard_normal((L, L)))[0] * rng.uniform(0.8, 1.2) for _ in range(depth)]
        Qs = [make_psd(rng, L) for _ in range(depth)]
        nu = np.linalg.eigvalsh(P)[0]
        xi = min(np.linalg.eigvalsh(F @ F.T)[0] for F in Fs)
        epsilon = min(np.linalg.eigvalsh(Q)[0] for Q in Qs)
        accumulated = depth if xi == 1.0 else (1.0 - xi**depth) / (1.0 - xi)
        bound = epsilon * accumulated + xi**depth * nu
        assert np.linalg.eigvalsh(n_step_cov(P, Fs, Qs))[0] >= bound - 1e-9


def test_privacy_loss_never_drops_when_rows_are_appended():
    rng = np.random.default_rng(9)
    for _ in range(30):
        L, N = int(rng.integers(3, 7)), int(rng.integers(2, 8))
        spec = PrivacySpec.partitioned(1, L - 1, delta=0.1, privacy_map="elementwise")
        pred = GaussianBelief(mean=np.zeros(L), cov=make_psd(rng, L), stage="predicted")
        Fs, Qs = [np.eye(L)], [0.1 * np.eye(L)]
        geom = step_geometry(pred, rng.standard_normal((N, L)), make_psd(rng, N), Fs, Qs)
        rows = rng.standard_normal((N, N))
        previous = [np.zeros(spec.n_maps)] * 2
        for M in range(1, N + 1):
            plan = CompressionPlan(matrix=rows[:M])
            for n in range(2):
                loss = privacy_loss(geom, plan, spec, n)
                assert np.all(loss >= previous[n] - 1e-9)
                previous[n] = loss


def test_utility_plus_posterior_trace_equals_prior_trace():
    rng = np.random.default_rng(13)
    for _ in range(30):
        L, N = int(rng.integers(3, 7)), int(rng.integers(1, 8))
        spec = PrivacySpec.partitioned(2, L - 2, delta=0.1)
        pred = GaussianBelief(mean=np.zeros(L), cov=make_psd(rng, L), stage="predicted")
        H, R = rng.standard_normal((N, L)), make_psd(rng, N)
        plan = CompressionPlan(matrix=rng.standard_normal((int(rng.integers(1, N + 1)), N)))
        geom = step_geometry(pred, H, R, [], [])
        post = compressed_update(pred, np.zeros(N), H, R, plan)
        total = utility(geom, plan, spec) + public_error_trace(post.cov, spec)
        assert total == pytest.approx(public_error_trace(pred.cov, spec), abs=1e-8)
