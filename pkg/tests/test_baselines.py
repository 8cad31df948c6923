import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.models.filter_models import GaussianBelief
from app.models.privacy_models import PrivacySpec
from app.services.base import AllRowsDroppedError, EmptyNullspaceError, NumericError
from app.services.baseline_service import (
    _projected_information,
    baseline_compression,
    calibrate_tradeoff,
    conditional_innovation,
    cp_compression,
    ib_compression,
    pf_compression,
    subspace_projections,
)
from app.services.privacy_service import step_geometry
from tests.conftest import make_psd


@pytest.fixture
def spec():
    return PrivacySpec.partitioned(2, 2, delta=1.0)


def _problem(rng, n_meas):
    pred = GaussianBelief(mean=np.zeros(4), cov=make_psd(rng, 4) + np.eye(4), stage="predicted")
    H = rng.standard_normal((n_meas, 4))
    R = 0.5 * np.eye(n_meas)
    return pred, H, step_geometry(pred, H, R, [], [])


def test_ib_keeps_only_informative_directions(rng, spec):
    pred, H, geom = _problem(rng, 4)
    plan = ib_compression(geom, pred, H, spec, gamma=1e6, M=4)
    # the other two directions carry no public information
    assert plan.rank_target == 2
    conditional = conditional_innovation(geom, pred, H, spec.public_idx)
    for row in plan.matrix:
        v = row / np.linalg.norm(row)
        lam = float(v @ conditional @ v) / float(v @ geom.T @ v)
        assert np.linalg.norm(conditional @ v - lam * geom.T @ v) < 1e-8
        assert lam < 1.0


def test_ib_discards_when_every_row_drops(rng, spec):
    pred, H, geom = _problem(rng, 4)
    plan = ib_compression(geom, pred, H, spec, gamma=0.5, M=2)
    assert plan.rank_target == 0
    with pytest.raises(AllRowsDroppedError):
        ib_compression(geom, pred, H, spec, gamma=0.5, M=2, strict=True)


def test_ib_rejects_bad_knobs(rng, spec):
    pred, H, geom = _problem(rng, 4)
    with pytest.raises(ValueError):
        ib_compression(geom, pred, H, spec, gamma=0.0, M=1)
    with pytest.raises(ValueError):
        ib_compression(geom, pred, H, spec, gamma=1.0, M=0)


def test_pf_rows_are_unit_norm(rng, spec):
    pred, H, geom = _problem(rng, 5)
    plan = pf_compression(geom, pred, H, spec, gamma=1.0, M=3)
    assert plan.matrix.shape == (3, 5)
    assert_allclose(np.linalg.norm(plan.matrix, axis=1), np.ones(3))


def test_cp_rows_solve_the_pencil(rng, spec):
    pred, H, geom = _problem(rng, 6)
    gamma = 0.7
    plan = cp_compression(geom, H, spec, gamma, 3)
    utility, privacy = subspace_projections(H, spec)
    pencil = _projected_information(geom.T, utility) - gamma * _projected_information(geom.T, privacy)
    for v in plan.matrix:
        mu = float(v @ pencil @ v) / float(v @ geom.T @ v)
        assert np.linalg.norm(pencil @ v - mu * geom.T @ v) < 1e-8


def test_subspace_projections_are_orthogonal_to_columns(rng, spec):
    H = rng.standard_normal((6, 4))
    utility, privacy = subspace_projections(H, spec)
    assert_allclose(utility @ H[:, spec.private_idx], 0.0, atol=1e-10)
    assert_allclose(privacy @ H[:, spec.public_idx], 0.0, atol=1e-10)


def test_cp_needs_a_complement(rng, spec):
    pred, H, geom = _problem(rng, 2)
    with pytest.raises(EmptyNullspaceError):
        cp_compression(geom, H, spec, 1.0, 1)
    with pytest.raises(ValueError):
        cp_compression(geom, H, spec, -1.0, 1)


def test_baseline_dispatch(rng, spec):
    pred, H, geom = _problem(rng, 6)
    assert baseline_compression("cp", geom, pred, H, spec, 0.0, 2).rank_target == 2
    with pytest.raises(ValueError):
        baseline_compression("pca", geom, pred, H, spec, 1.0, 2)
    empty = step_geometry(pred, np.zeros((0, 4)), np.zeros((0, 0)), [], [])
    assert baseline_compression("ib", empty, pred, np.zeros((0, 4)), spec, 1.0, 1).rank_target == 0


def test_calibration_hits_a_monotone_target():
    result = calibrate_tradeoff(lambda gamma, _M: gamma / (1.0 + gamma), 0.5)
    assert result.gamma == pytest.approx(1.0, rel=0.02)
    assert abs(result.gap) < 1e-6


def test_calibration_is_deterministic():
    evaluate = lambda gamma, M: M * np.log1p(gamma)
    first = calibrate_tradeoff(evaluate, 2.0, m_values=(1, 2, 3))
    second = calibrate_tradeoff(evaluate, 2.0, m_values=(1, 2, 3))
    assert first == second


def test_calibration_saturates_at_the_closest_point():
    result = calibrate_tradeoff(lambda gamma, _M: gamma / (1.0 + gamma), 2.0)
    assert result.gamma == pytest.approx(1e3)
    assert result.gap < 0


def test_calibration_prefers_points_above_target():
    # step function: nothing lands exactly on the target
    evaluate = lambda gamma, _M: 1.0 if gamma >= 1.0 else 0.0
    result = calibrate_tradeoff(evaluate, 0.45, prefer_above=True)
    assert result.eta == 1.0


def test_calibration_skips_failing_points():
    def evaluate(gamma, _M):
        if gamma < 0.1:
            raise NumericError("unstable")
        return gamma / (1.0 + gamma)

    assert calibrate_tradeoff(evaluate, 0.5).gamma == pytest.approx(1.0, rel=0.02)


def test_calibration_raises_when_nothing_evaluates():
    def evaluate(_gamma, _M):
        raise NumericError("always")

    with pytest.raises(NumericError):
        calibrate_tradeoff(evaluate, 0.5)
