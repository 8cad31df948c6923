"""Kalman filter primitives: predict, (compressed) update, n-step covariance, simulation."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from app.models.filter_models import CompressionPlan, GaussianBelief
from app.services.base import DimMismatchError, ServiceError, require_shape
from app.services.linalg import TOL_PD, check_psd, floored_inverse, sym_sqrt, symmetrize
from app.utils.logger import get_logger

logger = get_logger(__name__)


class FilterStageError(ServiceError):
    """Raised when predict/update is applied to a belief in the wrong stage."""


def predict(
    belief: GaussianBelief,
    F: NDArray[np.float64],
    Q: NDArray[np.float64],
) -> GaussianBelief:
    if belief.stage != "updated":
        raise FilterStageError("predict expects an updated belief")
    dim = belief.dim
    require_shape("F", np.asarray(F), (dim, dim))
    require_shape("Q", np.asarray(Q), (dim, dim))
    return GaussianBelief(
        mean=F @ belief.mean,
        cov=symmetrize(F @ belief.cov @ F.T + Q),
        stage="predicted",
    )


def update(
    belief: GaussianBelief,
    z: NDArray[np.float64],
    H: NDArray[np.float64],
    R: NDArray[np.float64],
    *,
    eig_floor: float = TOL_PD,
) -> GaussianBelief:
    """Standard Kalman measurement update.

    Args:
        belief: Predicted belief
        z: Measurement vector (length N, may be 0)
        H: N×L measurement matrix
        R: N×N measurement noise covariance
        eig_floor: Eigenvalue floor used when inverting the innovation covariance

    Returns:
        Updated belief; an empty measurement only flips the stage

    Raises:
        SingularMatrixError: if the innovation covariance cannot be inverted
    """
    if belief.stage != "predicted":
        raise FilterStageError("update expects a predicted belief")
    H = np.asarray(H, dtype=float)
    z = np.asarray(z, dtype=float).reshape(-1)
    n_meas = H.shape[0]
    if H.ndim != 2 or H.shape[1] != belief.dim:
        raise DimMismatchError(f"H has shape {H.shape} for a {belief.dim}-dim state")
    require_shape("z", z, (n_meas,))
    require_shape("R", np.asarray(R), (n_meas, n_meas))
    if n_meas == 0:
        return belief.with_stage("updated")

    cov = belief.cov
    innovation_cov = symmetrize(H @ cov @ H.T + R)
    gain = cov @ H.T @ floored_inverse(innovation_cov, eig_floor, name="innovation covariance")
    mean = belief.mean + gain @ (z - H @ belief.mean)
    new_cov = symmetrize((np.eye(belief.dim) - gain @ H) @ cov)
    return GaussianBelief(mean=mean, cov=new_cov, stage="updated")


def compressed_update(
    belief: GaussianBelief,
    z: NDArray[np.float64],
    H: NDArray[np.float64],
    R: NDArray[np.float64],
    plan: CompressionPlan,
    *,
    eig_floor: float = TOL_PD,
) -> GaussianBelief:
    C = plan.matrix
    if C.shape[1] != np.asarray(H).shape[0]:
        raise DimMismatchError(f"plan expects {C.shape[1]} measurement rows, H has {np.asarray(H).shape[0]}")
    if plan.rank_target == 0:
        if belief.stage != "predicted":
            raise FilterStageError("update expects a predicted belief")
        return belief.with_stage("updated")
    return update(belief, C @ z, C @ H, C @ R @ C.T, eig_floor=eig_floor)


def n_step_cov(
    cov: NDArray[np.float64],
    F_seq: Sequence[NDArray[np.float64]],
    Q_seq: Sequence[NDArray[np.float64]],
) -> NDArray[np.float64]:
    if len(F_seq) != len(Q_seq):
        raise DimMismatchError(f"{len(F_seq)} transitions but {len(Q_seq)} noise covariances")
    out = np.asarray(cov, dtype=float)
    for F, Q in zip(F_seq, Q_seq):
        require_shape("F", np.asarray(F), out.shape)
        require_shape("Q", np.asarray(Q), out.shape)
        out = symmetrize(F @ out @ F.T + Q)
    return out


def sample_gaussian(rng: np.random.Generator, cov: NDArray[np.float64]) -> NDArray[np.float64]:
    """Zero-mean draw through the symmetric square root (handles singular cov)."""
    factor = sym_sqrt(check_psd(cov, name="sampling covariance"))
    return factor @ rng.standard_normal(factor.shape[0])


def simulate_step(
    rng: np.random.Generator,
    x: NDArray[np.float64],
    F: NDArray[np.float64],
    Q: NDArray[np.float64],
    H: NDArray[np.float64],
    R: NDArray[np.float64],
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    x_next = F @ x + sample_gaussian(rng, Q)
    H = np.asarray(H, dtype=float)
    if H.shape[0] == 0:
        return x_next, np.zeros(0)
    z = H @ x_next + sample_gaussian(rng, R)
    return x_next, z
