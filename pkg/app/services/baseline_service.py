"""Closed-form competing compressions: information bottleneck, privacy funnel
and subspace compressive privacy, plus a search for their tradeoff knobs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from app.models.filter_models import CompressionPlan, GaussianBelief
from app.models.privacy_models import PrivacySpec, StepGeometry
from app.services.base import AllRowsDroppedError, EmptyNullspaceError, NumericError, SingularMatrixError
from app.services.linalg import floored_inverse, generalized_eigh, generalized_top_eigvecs, symmetrize
from app.utils.logger import get_logger

logger = get_logger(__name__)

BaselineKind = Literal["ib", "pf", "cp"]

LAMBDA_FLOOR = 1e-12


def _check_knobs(gamma: float, M: int) -> None:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if M < 1:
        raise ValueError("M must be at least 1")


def conditional_innovation(
    geom: StepGeometry,
    pred: GaussianBelief,
    H: NDArray[np.float64],
    relevant: Sequence[int],
) -> NDArray[np.float64]:
    """Innovation covariance once the relevant sub-state is known: T − Σ_zy Σ_yy⁻¹ Σ_zyᵀ."""
    idx = list(relevant)
    cross = np.asarray(H, dtype=float) @ pred.cov[:, idx]
    prior_inv = floored_inverse(pred.cov[np.ix_(idx, idx)], name="relevant prior block")
    return symmetrize(geom.T - cross @ prior_inv @ cross.T)


def ib_compression(
    geom: StepGeometry,
    pred: GaussianBelief,
    H: NDArray[np.float64],
    spec: PrivacySpec,
    gamma: float,
    M: int,
    *,
    strict: bool = False,
) -> CompressionPlan:
    """Gaussian information bottleneck with the public sub-state as relevance variable.

    Rows are the left eigenvectors of Σ_{z|y} T⁻¹ with the smallest eigenvalues,
    scaled by α_i; rows whose α would be imaginary are dropped.

    Raises:
        AllRowsDroppedError: only when ``strict`` and no row survives
    """
    _check_knobs(gamma, M)
    conditional = conditional_innovation(geom, pred, H, spec.public_idx)
    # Σ_{z|y} v = λ T v  <=>  vᵀ Σ_{z|y} T⁻¹ = λ vᵀ
    values, vectors = generalized_eigh(conditional, geom.T)
    rows = []
    for value, v in zip(values[:M], vectors.T[:M]):
        if gamma * (1.0 - value) <= 1.0:
            continue
        lam = max(float(value), LAMBDA_FLOOR)
        alpha = np.sqrt((gamma * (1.0 - value) - 1.0) / (lam * float(v @ geom.T @ v)))
        rows.append(alpha * v)

    if not rows:
        if strict:
            raise AllRowsDroppedError(f"no IB row survives at gamma={gamma:.4g}")
        logger.debug(f"IB at gamma={gamma:.4g}: every row dropped, measurement discarded")
        return CompressionPlan.discard(geom.n_meas, feasible=True)
    return CompressionPlan(matrix=np.vstack(rows))


def pf_compression(
    geom: StepGeometry,
    pred: GaussianBelief,
    H: NDArray[np.float64],
    spec: PrivacySpec,
    gamma: float,
    M: int,
) -> CompressionPlan:
    """Privacy funnel with the private sub-state as relevance variable; unit-norm rows, largest eigenvalues first."""
    _check_knobs(gamma, M)
    conditional = conditional_innovation(geom, pred, H, spec.private_idx)
    _, vectors = generalized_eigh(conditional, geom.T)
    selected = vectors[:, ::-1][:, :M]
    return CompressionPlan(matrix=selected.T)


def subspace_projections(
    H: NDArray[np.float64],
    spec: PrivacySpec,
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Utility projection ⊥ to the private columns of H, privacy projection ⊥ to the public ones."""
    H = np.asarray(H, dtype=float)
    utility = sla.null_space(H[:, spec.private_idx].T).T
    privacy = sla.null_space(H[:, spec.public_idx].T).T
    if utility.shape[0] == 0 or privacy.shape[0] == 0:
        raise EmptyNullspaceError(
            f"H columns leave no complement (utility {utility.shape[0]}, privacy {privacy.shape[0]} dims)"
        )
    return utility, privacy


def _projected_information(T: NDArray[np.float64], projection: NDArray[np.float64]) -> NDArray[np.float64]:
    TG = T @ projection.T
    try:
        solved = sla.solve(symmetrize(projection @ TG), TG.T, assume_a="pos")
    except (sla.LinAlgError, np.linalg.LinAlgError) as exc:
        raise SingularMatrixError("projected innovation covariance is singular") from exc
    return symmetrize(TG @ solved)


def cp_compression(
    geom: StepGeometry,
    H: NDArray[np.float64],
    spec: PrivacySpec,
    gamma: float,
    M: int,
) -> CompressionPlan:
    """Principal generalized eigenvectors of (Ω − γΠ, T).

    ``gamma = 0`` is allowed here and switches the privacy term off.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if M < 1:
        raise ValueError("M must be at least 1")
    utility, privacy = subspace_projections(H, spec)
    omega = _projected_information(geom.T, utility)
    pi = _projected_information(geom.T, privacy)
    selection = generalized_top_eigvecs(omega - gamma * pi, geom.T, min(M, geom.n_meas))
    return CompressionPlan(matrix=selection.vectors.T)


def baseline_compression(
    kind: BaselineKind,
    geom: StepGeometry,
    pred: GaussianBelief,
    H: NDArray[np.float64],
    spec: PrivacySpec,
    gamma: float,
    M: int,
) -> CompressionPlan:
    if geom.n_meas == 0:
        return CompressionPlan.discard(0, feasible=True)
    if kind == "ib":
        return ib_compression(geom, pred, H, spec, gamma, M)
    if kind == "pf":
        return pf_compression(geom, pred, H, spec, gamma, M)
    if kind == "cp":
        return cp_compression(geom, H, spec, gamma, M)
    raise ValueError(f"unknown baseline '{kind}'")


@dataclass(frozen=True)
class CalibrationResult:
    gamma: float
    M: int
    eta: float
    gap: float


def calibrate_tradeoff(
    evaluate: Callable[[float, int], float],
    target: float,
    *,
    gamma_bounds: Tuple[float, float] = (1e-3, 1e3),
    grid_size: int = 25,
    m_values: Sequence[int] = (1,),
    bisection_steps: int = 30,
    prefer_above: bool = False,
) -> CalibrationResult:
    """Search γ (log grid refined by bisection) and M so that ``evaluate(γ, M)`` lands on ``target``.

    Points where ``evaluate`` raises a NumericError are skipped. With
    ``prefer_above`` a result at or above the target wins over a closer one
    below it.

    Returns:
        The best point found; ``gap`` is ``eta - target``
    """
    low, high = gamma_bounds
    if not 0 < low < high:
        raise ValueError("gamma_bounds must satisfy 0 < low < high")

    best: Optional[CalibrationResult] = None

    def consider(gamma: float, M: int) -> Optional[float]:
        nonlocal best
        try:
            eta = float(evaluate(gamma, M))
        except NumericError as exc:
            logger.debug(f"calibration point gamma={gamma:.4g}, M={M} failed: {exc}")
            return None
        candidate = CalibrationResult(gamma=gamma, M=M, eta=eta, gap=eta - target)
        if best is None or _closer(candidate, best, prefer_above):
            best = candidate
        return eta

    log_grid = np.linspace(np.log(low), np.log(high), grid_size)
    for M in m_values:
        previous: Optional[Tuple[float, float]] = None
        for log_gamma in log_grid:
            eta = consider(float(np.exp(log_gamma)), M)
            if eta is None:
                previous = None
                continue
            if previous is not None and (previous[1] - target) * (eta - target) < 0:
                _bisect(consider, M, target, previous[0], log_gamma, previous[1], bisection_steps)
            previous = (log_gamma, eta)

    if best is None:
        raise NumericError("no calibration point could be evaluated")
    logger.info(f"calibrated gamma={best.gamma:.6g}, M={best.M}: eta={best.eta:.6g} (gap {best.gap:+.3g})")
    return best


def _bisect(consider, M: int, target: float, lo: float, hi: float, eta_lo: float, steps: int) -> None:
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        eta = consider(float(np.exp(mid)), M)
        if eta is None:
            return
        if (eta_lo - target) * (eta - target) <= 0:
            hi = mid
        else:
            lo, eta_lo = mid, eta


def _closer(candidate: CalibrationResult, best: CalibrationResult, prefer_above: bool) -> bool:
    if prefer_above and (candidate.gap >= 0) != (best.gap >= 0):
        return candidate.gap >= 0
    return abs(candidate.gap) < abs(best.gap)
