"""Random system generators and the seeded per-step model used by experiments."""

from __future__ import annotations

from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.typing import NDArray

from app.models.filter_models import GaussianBelief, LdsModel
from app.models.privacy_models import PrivacySpec
from app.models.scenario_models import ScenarioConfig

TRANSITION_STREAM = 0
MEASUREMENT_STREAM = 1
DROP_STREAM = 2
NOISE_STREAM = 3


def _orthonormal(rng: np.random.Generator, rows: int, cols: int) -> NDArray[np.float64]:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    # Fix the QR sign ambiguity so the factor is Haar distributed
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def _row_normalized(rng: np.random.Generator, rows: int, cols: int) -> NDArray[np.float64]:
    base = rng.standard_normal((rows, cols))
    return base / np.linalg.norm(base, axis=1, keepdims=True)


def gen_F(
    kind: str,
    rng: np.random.Generator,
    dim_state: int,
    spec: PrivacySpec,
    *,
    sv_low: float = 1.0,
    sv_high: float = 1.2,
    omega: float = 0.2,
) -> NDArray[np.float64]:
    """Draw a transition matrix.

    ``mixing`` scales the diagonal blocks of a row-normalized Gaussian matrix
    by ω and the public/private coupling blocks by 1 − ω; ``flip`` has zero
    diagonal blocks so public and private states swap every step.
    """
    if kind == "identity":
        return np.eye(dim_state)
    if kind == "random_sv":
        left = _orthonormal(rng, dim_state, dim_state)
        right = _orthonormal(rng, dim_state, dim_state)
        return left @ np.diag(rng.uniform(sv_low, sv_high, dim_state)) @ right.T
    if kind == "gaussian_rows":
        return _row_normalized(rng, dim_state, dim_state)

    P, Q = spec.public_idx, spec.private_idx
    if not P:
        raise ValueError(f"F generator '{kind}' needs at least one public state")
    if kind == "mixing":
        F = _row_normalized(rng, dim_state, dim_state)
        F[np.ix_(P, P)] *= omega
        F[np.ix_(Q, Q)] *= omega
        F[np.ix_(P, Q)] *= 1.0 - omega
        F[np.ix_(Q, P)] *= 1.0 - omega
        return F
    if kind == "flip":
        F = np.zeros((dim_state, dim_state))
        F[np.ix_(P, Q)] = _row_normalized(rng, len(P), len(Q))
        F[np.ix_(Q, P)] = _row_normalized(rng, len(Q), len(P))
        return F
    raise ValueError(f"unknown F generator '{kind}'")


def gen_H(kind: str, rng: np.random.Generator, dim_meas: int, dim_state: int) -> NDArray[np.float64]:
    if kind == "gaussian":
        return rng.standard_normal((dim_meas, dim_state))
    if kind == "orthogonal":
        return _orthonormal(rng, dim_meas, dim_state)
    if kind == "identity":
        return np.eye(dim_meas, dim_state)
    raise ValueError(f"unknown H generator '{kind}'")


def drop_rows(
    H: NDArray[np.float64],
    R: NDArray[np.float64],
    p: float,
    rng: np.random.Generator,
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Keep each measurement row independently with probability 1 − p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    keep = np.flatnonzero(rng.random(H.shape[0]) >= p)
    return H[keep], R[np.ix_(keep, keep)]


def stream_rng(seed: int, trial: int, stream: int, k: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial, stream, k]))


def build_model(cfg: ScenarioConfig, trial: int = 0) -> LdsModel:
    """Time-varying LDS whose step-k matrices depend only on (seed, trial, k)."""
    spec = cfg.privacy_spec()
    Q = cfg.q_scale * np.eye(cfg.dim_state)
    R = cfg.r_scale * np.eye(cfg.dim_meas)

    @lru_cache(maxsize=256)
    def transition(k: int) -> NDArray[np.float64]:
        rng = stream_rng(cfg.seed, trial, TRANSITION_STREAM, k)
        return gen_F(
            cfg.f_generator,
            rng,
            cfg.dim_state,
            spec,
            sv_low=cfg.sv_low,
            sv_high=cfg.sv_high,
            omega=cfg.omega,
        )

    @lru_cache(maxsize=256)
    def measurement(k: int) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        H = gen_H(cfg.h_generator, stream_rng(cfg.seed, trial, MEASUREMENT_STREAM, k), cfg.dim_meas, cfg.dim_state)
        if cfg.drop_prob:
            return drop_rows(H, R, cfg.drop_prob, stream_rng(cfg.seed, trial, DROP_STREAM, k))
        return H, R

    return LdsModel(
        dim_state=cfg.dim_state,
        dim_meas=cfg.dim_meas,
        transition=transition,
        process_noise=lambda _k: Q,
        measurement=measurement,
    )


def initial_belief(cfg: ScenarioConfig) -> GaussianBelief:
    return GaussianBelief(
        mean=np.zeros(cfg.dim_state),
        cov=cfg.p0_scale * np.eye(cfg.dim_state),
        stage="updated",
    )
