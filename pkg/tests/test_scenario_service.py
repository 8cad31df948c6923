import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.models.privacy_models import PrivacySpec
from app.models.scenario_models import ScenarioConfig
from app.services.scenario_service import (
    build_model,
    drop_rows,
    gen_F,
    gen_H,
    initial_belief,
    stream_rng,
)


@pytest.fixture
def spec():
    return PrivacySpec.partitioned(3, 3, delta=1.0)


def test_random_sv_singular_values_stay_in_range(rng, spec):
    for _ in range(20):
        F = gen_F("random_sv", rng, 6, spec, sv_low=1.0, sv_high=1.2)
        singular = np.linalg.svd(F, compute_uv=False)
        assert singular.min() >= 1.0 - 1e-10
        assert singular.max() <= 1.2 + 1e-10


def test_gaussian_rows_are_normalized(rng, spec):
    F = gen_F("gaussian_rows", rng, 6, spec)
    assert_allclose(np.linalg.norm(F, axis=1), np.ones(6))


def test_mixing_weights_blocks(rng, spec):
    P, Q = spec.public_idx, spec.private_idx
    decoupled = gen_F("mixing", rng, 6, spec, omega=1.0)
    assert_allclose(decoupled[np.ix_(P, Q)], 0.0)
    assert_allclose(decoupled[np.ix_(Q, P)], 0.0)
    swapped = gen_F("mixing", rng, 6, spec, omega=0.0)
    assert_allclose(swapped[np.ix_(P, P)], 0.0)
    assert_allclose(swapped[np.ix_(Q, Q)], 0.0)


def test_flip_has_zero_diagonal_blocks(rng, spec):
    F = gen_F("flip", rng, 6, spec)
    assert_allclose(F[:3, :3], 0.0)
    assert_allclose(F[3:, 3:], 0.0)
    assert_allclose(np.linalg.norm(F[:3, 3:], axis=1), np.ones(3))


def test_block_generators_need_public_states(rng):
    spec = PrivacySpec.partitioned(0, 2, delta=1.0)
    with pytest.raises(ValueError):
        gen_F("flip", rng, 2, spec)
    assert_allclose(gen_F("identity", rng, 2, spec), np.eye(2))


def test_unknown_generators_raise(rng, spec):
    with pytest.raises(ValueError):
        gen_F("rotation", rng, 6, spec)
    with pytest.raises(ValueError):
        gen_H("sparse", rng, 4, 6)


def test_orthogonal_h_has_orthonormal_columns(rng):
    H = gen_H("orthogonal", rng, 10, 6)
    assert_allclose(H.T @ H, np.eye(6), atol=1e-12)


def test_drop_rows_extremes(rng):
    H = np.arange(20, dtype=float).reshape(10, 2)
    R = np.eye(10)
    kept_H, kept_R = drop_rows(H, R, 0.0, rng)
    assert_allclose(kept_H, H)
    empty_H, empty_R = drop_rows(H, R, 1.0, rng)
    assert empty_H.shape == (0, 2)
    assert empty_R.shape == (0, 0)
    with pytest.raises(ValueError):
        drop_rows(H, R, 1.5, rng)


def test_drop_rows_keeps_expected_count(rng):
    H, R = np.ones((10, 2)), np.eye(10)
    counts = [drop_rows(H, R, 0.8, rng)[0].shape[0] for _ in range(10_000)]
    assert np.mean(counts) == pytest.approx(2.0, abs=0.1)


def test_streams_are_independent_and_reproducible():
    first = stream_rng(7, 0, 1, 3).standard_normal(4)
    assert_allclose(stream_rng(7, 0, 1, 3).standard_normal(4), first)
    assert not np.allclose(stream_rng(7, 0, 2, 3).standard_normal(4), first)
    assert not np.allclose(stream_rng(7, 1, 1, 3).standard_normal(4), first)


def test_model_depends_only_on_seed_trial_and_step():
    cfg = ScenarioConfig(seed=3, dim_state=4, dim_meas=5, n_public=2, n_private=2)
    first, second = build_model(cfg, 0), build_model(cfg, 0)
    assert np.array_equal(first.transition_at(4), second.transition_at(4))
    assert np.array_equal(first.measurement_at(2)[0], second.measurement_at(2)[0])
    assert not np.allclose(first.transition_at(4), build_model(cfg, 1).transition_at(4))
    assert_allclose(first.process_noise_at(1), np.eye(4))


def test_lossy_model_varies_row_count():
    cfg = ScenarioConfig(
        seed=1, dim_state=4, dim_meas=4, n_public=2, n_private=2,
        f_generator="identity", h_generator="identity", drop_prob=0.5,
    )
    model = build_model(cfg)
    sizes = {model.measurement_at(k)[0].shape[0] for k in range(1, 40)}
    assert len(sizes) > 1


def test_initial_belief_uses_p0_scale():
    cfg = ScenarioConfig(dim_state=2, dim_meas=2, n_public=1, n_private=1, p0_scale=0.01)
    belief = initial_belief(cfg)
    assert belief.stage == "updated"
    assert_allclose(belief.cov, 0.01 * np.eye(2))
