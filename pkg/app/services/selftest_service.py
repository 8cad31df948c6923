"""Randomized identity checks of the filter and solver algebra, run from the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np

from app.models.filter_models import CompressionPlan, GaussianBelief
from app.models.privacy_models import PrivacySpec
from app.models.sensor_models import BlockPlan, SensorPartition
from app.services.decentral_solver_service import (
    assemble_reduction,
    exact_block_reduction,
    sequential_context,
)
from app.services.kalman_service import compressed_update, n_step_cov
from app.services.linalg import sym_inv_sqrt, whitened_row_basis
from app.services.privacy_service import error_reduction, step_geometry
from app.utils.logger import get_logger

logger = get_logger(__name__)

IDENTITY_TOL = 1e-8


@dataclass(frozen=True)
class CheckResult:
    name: str
    instances: int
    max_error: float

    @property
    def passed(self) -> bool:
        return self.max_error < IDENTITY_TOL


@dataclass
class SelftestReport:
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)


def random_psd(rng: np.random.Generator, dim: int, *, jitter: float = 0.1) -> np.ndarray:
    factor = rng.standard_normal((dim, dim))
    return factor @ factor.T / dim + jitter * np.eye(dim)


def random_instance(rng: np.random.Generator, *, max_state: int = 6, max_meas: int = 8, max_depth: int = 3):
    """Predicted belief, measurement model and future dynamics of random size."""
    L = int(rng.integers(2, max_state + 1))
    N = int(rng.integers(1, max_meas + 1))
    depth = int(rng.integers(0, max_depth + 1))
    pred = GaussianBelief(mean=rng.standard_normal(L), cov=random_psd(rng, L), stage="predicted")
    H = rng.standard_normal((N, L))
    R = random_psd(rng, N)
    F_future = [rng.standard_normal((L, L)) / np.sqrt(L) for _ in range(depth)]
    Q_future = [random_psd(rng, L) for _ in range(depth)]
    return pred, H, R, F_future, Q_future


def random_plan(rng: np.random.Generator, n_meas: int) -> CompressionPlan:
    M = int(rng.integers(1, n_meas + 1))
    return CompressionPlan(matrix=rng.standard_normal((M, n_meas)))


def check_whitening(rng: np.random.Generator) -> float:
    """Cᵀ(CTCᵀ)⁻¹C against T^{-1/2} U Uᵀ T^{-1/2}."""
    N = int(rng.integers(1, 9))
    T = random_psd(rng, N)
    C = random_plan(rng, N).matrix
    direct = C.T @ np.linalg.solve(C @ T @ C.T, C)
    basis = whitened_row_basis(C, T)
    whitener = sym_inv_sqrt(T)
    return float(np.max(np.abs(direct - whitener @ basis @ basis.T @ whitener)))


def check_reduction(rng: np.random.Generator) -> float:
    """Covariance reduction against the filter path at every horizon."""
    pred, H, R, F_future, Q_future = random_instance(rng)
    plan = random_plan(rng, H.shape[0])
    geom = step_geometry(pred, H, R, F_future, Q_future)
    updated = compressed_update(pred, np.zeros(H.shape[0]), H, R, plan)
    worst = 0.0
    for n in range(geom.depth + 1):
        predicted_n = n_step_cov(pred.cov, F_future[:n], Q_future[:n])
        updated_n = n_step_cov(updated.cov, F_future[:n], Q_future[:n])
        difference = predicted_n - updated_n
        worst = max(worst, float(np.max(np.abs(error_reduction(geom, plan, n) - difference))))
    return worst


def check_block_decomposition(rng: np.random.Generator) -> float:
    """One sensor's conditional contribution plus the others' reduction equals the joint one."""
    n_sensors = int(rng.integers(2, 4))
    dims = [int(d) for d in rng.integers(1, 4, size=n_sensors)]
    part = SensorPartition.from_dims(dims)
    L = int(rng.integers(2, 6))
    pred = GaussianBelief(mean=np.zeros(L), cov=random_psd(rng, L), stage="predicted")
    H = rng.standard_normal((part.n_meas, L))
    R = random_psd(rng, part.n_meas)
    depth = int(rng.integers(0, 3))
    F_future = [rng.standard_normal((L, L)) / np.sqrt(L) for _ in range(depth)]
    Q_future = [random_psd(rng, L) for _ in range(depth)]
    geom = step_geometry(pred, H, R, F_future, Q_future)
    spec = PrivacySpec.partitioned(1, L - 1, delta=1.0)

    blocks = [random_plan(rng, n_s).matrix for n_s in dims]
    plan = BlockPlan(partition=part, blocks=blocks)
    s = int(rng.integers(0, n_sensors))
    ctx = sequential_context(geom, part, plan, s, spec)
    worst = 0.0
    for n in range(geom.depth + 1):
        joint = exact_block_reduction(geom, part, plan, n)
        worst = max(worst, float(np.max(np.abs(assemble_reduction(ctx, blocks[s], n) - joint))))
    return worst


CHECKS: Tuple[Tuple[str, Callable[[np.random.Generator], float]], ...] = (
    ("whitening identity", check_whitening),
    ("covariance reduction", check_reduction),
    ("block decomposition", check_block_decomposition),
)


def run_selftest(seed: int = 0, trials: int = 100) -> SelftestReport:
    report = SelftestReport()
    for index, (name, check) in enumerate(CHECKS):
        rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        worst = max(check(rng) for _ in range(trials))
        result = CheckResult(name=name, instances=trials, max_error=worst)
        report.results.append(result)
        level = logger.info if result.passed else logger.error
        level(f"{name}: {'ok' if result.passed else 'FAILED'} over {trials} instances (max error {worst:.3e})")
    return report
