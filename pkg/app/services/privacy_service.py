"""Utility and privacy quantities of a compressed measurement update."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from app.models.filter_models import CompressionPlan, GaussianBelief
from app.models.privacy_models import AutoLookahead, PrivacySpec, StepGeometry
from app.services.base import DimMismatchError, NoFiniteBoundError, SingularMatrixError
from app.services.kalman_service import FilterStageError, n_step_cov
from app.services.linalg import symmetrize
from app.utils.logger import get_logger

logger = get_logger(__name__)

MAX_LOOKAHEAD_SCAN = 100_000


def public_error_trace(cov: NDArray[np.float64], spec: PrivacySpec) -> float:
    idx = spec.public_idx
    return float(np.trace(cov[np.ix_(idx, idx)]))


def private_error(cov: NDArray[np.float64], spec: PrivacySpec) -> NDArray[np.float64]:
    idx = spec.private_idx
    return spec.map_A @ np.diag(cov)[idx]


def step_geometry(
    pred: GaussianBelief,
    H: NDArray[np.float64],
    R: NDArray[np.float64],
    F_future: Sequence[NDArray[np.float64]],
    Q_future: Sequence[NDArray[np.float64]],
) -> StepGeometry:
    """Build T, the cross-covariances G_n and the update-free predictions for n = 0..r."""
    if pred.stage != "predicted":
        raise FilterStageError("step_geometry expects a predicted belief")
    if len(F_future) != len(Q_future):
        raise DimMismatchError("F_future and Q_future must have equal length")
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[1] != pred.dim:
        raise DimMismatchError(f"H has shape {H.shape} for a {pred.dim}-dim state")
    if np.asarray(R).shape != (H.shape[0], H.shape[0]):
        raise DimMismatchError(f"R has shape {np.asarray(R).shape} for {H.shape[0]} measurements")

    cov = pred.cov
    HP = H @ cov
    T = symmetrize(HP @ H.T + R)

    G_by_n = [HP]
    P_pred_by_n = [cov]
    propagator = np.eye(pred.dim)
    for F, Q in zip(F_future, Q_future):
        propagator = F @ propagator
        G_by_n.append(HP @ propagator.T)
        P_pred_by_n.append(n_step_cov(P_pred_by_n[-1], [F], [Q]))
    return StepGeometry(T=T, G_by_n=G_by_n, P_pred_by_n=P_pred_by_n)


def error_reduction(geom: StepGeometry, plan: CompressionPlan, n: int) -> NDArray[np.float64]:
    """Covariance reduction at horizon n caused by admitting the compressed measurement."""
    if not 0 <= n <= geom.depth:
        raise DimMismatchError(f"horizon {n} outside 0..{geom.depth}")
    G = geom.G_by_n[n]
    if plan.rank_target == 0:
        return np.zeros((G.shape[1], G.shape[1]))
    C = plan.matrix
    if C.shape[1] != geom.n_meas:
        raise DimMismatchError(f"plan has {C.shape[1]} columns, T is {geom.n_meas}×{geom.n_meas}")
    CG = C @ G
    try:
        solved = sla.solve(symmetrize(C @ geom.T @ C.T), CG, assume_a="pos")
    except (sla.LinAlgError, np.linalg.LinAlgError) as exc:
        raise SingularMatrixError("C·T·Cᵀ is not invertible") from exc
    return symmetrize(CG.T @ solved)


def utility(geom: StepGeometry, plan: CompressionPlan, spec: PrivacySpec) -> float:
    reduction = error_reduction(geom, plan, 0)
    return public_error_trace(reduction, spec)


def privacy_loss(
    geom: StepGeometry,
    plan: CompressionPlan,
    spec: PrivacySpec,
    n: int,
) -> NDArray[np.float64]:
    return private_error(error_reduction(geom, plan, n), spec)


def loss_thresholds(geom: StepGeometry, spec: PrivacySpec, n: int) -> NDArray[np.float64]:
    """Remaining loss budget per map row at horizon n; negative means infeasible even at M = 0."""
    return private_error(geom.P_pred_by_n[n], spec) - spec.floor()


def all_thresholds(geom: StepGeometry, spec: PrivacySpec) -> NDArray[np.float64]:
    """Thresholds stacked as a (r+1)×|𝓕| array."""
    return np.vstack([loss_thresholds(geom, spec, n) for n in range(geom.depth + 1)])


def _clearing_horizon(spec: PrivacySpec, nu: float, xi: float, epsilon: float) -> int:
    """Smallest r whose noise-driven variance bound meets the mapped floor."""
    ones_mapped = spec.map_A @ np.ones(len(spec.private_idx))
    target = spec.floor()

    def bound(r: int) -> np.ndarray:
        accumulated = r if xi == 1.0 else (1.0 - xi**r) / (1.0 - xi)
        return ones_mapped * (epsilon * accumulated + xi**r * nu)

    for r in range(MAX_LOOKAHEAD_SCAN):
        if np.all(bound(r) >= target):
            return r
    raise NoFiniteBoundError("look-ahead scan did not reach the floor")


def _check_bound_inputs(spec: PrivacySpec, nu: float, xi: float, epsilon: float) -> None:
    if xi <= 0 or epsilon <= 0 or nu <= 0:
        raise ValueError("xi, epsilon and nu must be positive")
    if xi < 1.0:
        limit = epsilon / (1.0 - xi)
        ones_mapped = spec.map_A @ np.ones(len(spec.private_idx))
        if np.any(spec.floor() > ones_mapped * limit) or nu >= limit:
            raise NoFiniteBoundError(
                f"variance bound saturates at {limit:.4g}, floor {spec.floor().max():.4g} unreachable"
            )


def min_lookahead(spec: PrivacySpec, nu: float, xi: float, epsilon: float) -> int:
    """Smallest look-ahead depth whose noise-driven variance bound clears the floor.

    Args:
        spec: Privacy requirement (map and δ)
        nu: Lower bound on the predicted covariance eigenvalues
        xi: Lower bound on the eigenvalues of F Fᵀ
        epsilon: Lower bound on the eigenvalues of Q

    Returns:
        The depth, clamped at 0

    Raises:
        NoFiniteBoundError: if ξ < 1 and the bound saturates below the floor
    """
    _check_bound_inputs(spec, nu, xi, epsilon)
    return max(_clearing_horizon(spec, nu, xi, epsilon) - 1, 0)


def carried_lookahead(spec: PrivacySpec, xi: float, epsilon: float) -> int:
    """Depth that keeps next step's budgets non-negative whatever this step releases.

    After the update only the process noise bounds the covariance from below,
    so horizon r + 1 is safe unaided once the bound started from ν = ε clears
    the floor at r.
    """
    _check_bound_inputs(spec, epsilon, xi, epsilon)
    return _clearing_horizon(spec, epsilon, xi, epsilon)


def lookahead_depth(spec: PrivacySpec, pred: GaussianBelief) -> int:
    """Depth for this step under the requirement's look-ahead policy."""
    policy = spec.lookahead
    if isinstance(policy, AutoLookahead):
        nu = max(float(np.linalg.eigvalsh(pred.cov)[0]), 1e-12)
        depth = max(
            min_lookahead(spec, nu, policy.xi, policy.epsilon),
            carried_lookahead(spec, policy.xi, policy.epsilon),
        )
        logger.debug(f"auto look-ahead: nu={nu:.4g} -> r={depth}")
        return depth
    return policy.depth
