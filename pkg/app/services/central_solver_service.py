"""Single-sensor compression design.

The compression rows come from the top eigenvectors of a Lagrangian matrix
built from whitened cross-covariance Gram matrices; the multipliers are found
by bisection and the compressed dimension M is reduced until the privacy
constraints hold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from app.config.settings import Settings
from app.models.filter_models import CompressionPlan, GaussianBelief
from app.models.privacy_models import PrivacySpec, StepGeometry
from app.services.linalg import EigenSelection, sym_inv_sqrt, symmetrize, top_nonzero_eigvecs
from app.services.privacy_service import all_thresholds, step_geometry
from app.utils.logger import get_logger

logger = get_logger(__name__)

# Absolute feasibility slack, scaled by max(1, |threshold|)
FEASIBILITY_SLACK = 1e-10


@dataclass(frozen=True)
class ThetaSet:
    """Whitened Gram matrices: ``theta_P`` (N×N) and ``theta_Q`` ((r+1)×|Q|×N×N)."""

    theta_P: NDArray[np.float64]
    theta_Q: NDArray[np.float64]
    whitener: NDArray[np.float64]

    @property
    def n_meas(self) -> int:
        return int(self.theta_P.shape[0])

    @property
    def depth(self) -> int:
        return int(self.theta_Q.shape[0]) - 1

    def mapped(self, map_A: NDArray[np.float64]) -> NDArray[np.float64]:
        """Σ_j A(f, j)·Θ^(Q_j, n) for every (n, f), shape (r+1)×|𝓕|×N×N."""
        return np.einsum("fj,njab->nfab", map_A, self.theta_Q)


@dataclass(frozen=True)
class MultiplierSolution:
    gamma: NDArray[np.float64]
    basis: EigenSelection
    feasible: bool
    utility: float
    losses: NDArray[np.float64]


@dataclass(frozen=True)
class _Candidate:
    gamma: NDArray[np.float64]
    basis: EigenSelection
    utility: float
    losses: NDArray[np.float64]


class _MultiplierProblem:
    """Flattened constraint view of one (thetas, thresholds, M) search."""

    def __init__(self, thetas: ThetaSet, spec: PrivacySpec, thresholds: NDArray[np.float64], M: int):
        self.theta_P = thetas.theta_P
        mapped = thetas.mapped(spec.map_A)
        self.shape = mapped.shape[:2]
        n = thetas.n_meas
        self.privacy = mapped.reshape(-1, n, n)
        self.thresholds = np.asarray(thresholds, dtype=float).reshape(-1)
        self.slack = FEASIBILITY_SLACK * np.maximum(1.0, np.abs(self.thresholds))
        self.M = M

    @property
    def n_constraints(self) -> int:
        return int(self.thresholds.shape[0])

    def evaluate(self, gamma: NDArray[np.float64]) -> _Candidate:
        phi = self.theta_P - np.tensordot(gamma, self.privacy, axes=1)
        basis = top_nonzero_eigvecs(phi, self.M)
        U = basis.vectors
        utility = float(np.einsum("im,ij,jm->", U, self.theta_P, U))
        losses = np.einsum("im,kij,jm->k", U, self.privacy, U)
        return _Candidate(gamma=gamma.copy(), basis=basis, utility=utility, losses=losses)

    def satisfied(self, candidate: _Candidate, c: int) -> bool:
        return bool(candidate.losses[c] <= self.thresholds[c] + self.slack[c])

    def feasible(self, candidate: _Candidate) -> bool:
        return bool(np.all(candidate.losses <= self.thresholds + self.slack))


class CentralizedSolver:
    def __init__(
        self,
        settings: Optional[Settings] = None,
        *,
        max_sweeps: Optional[int] = None,
        max_doublings: Optional[int] = None,
        bisection_steps: Optional[int] = None,
    ) -> None:
        self.settings = settings or Settings()
        self._max_sweeps = max_sweeps or self.settings.MULTIPLIER_MAX_SWEEPS
        self._max_doublings = (
            max_doublings if max_doublings is not None else self.settings.MULTIPLIER_MAX_DOUBLINGS
        )
        self._bisection_steps = bisection_steps or self.settings.MULTIPLIER_BISECTION_STEPS
        self._gamma_scale = self.settings.GAMMA_MAX_SCALE

    @staticmethod
    def build_thetas(geom: StepGeometry, spec: PrivacySpec) -> ThetaSet:
        whitener = sym_inv_sqrt(geom.T)
        weights = [whitener @ G for G in geom.G_by_n]
        public = weights[0][:, spec.public_idx]
        theta_P = symmetrize(public @ public.T)
        private = np.stack([W[:, spec.private_idx] for W in weights])
        theta_Q = np.einsum("naj,nbj->njab", private, private)
        return ThetaSet(theta_P=theta_P, theta_Q=theta_Q, whitener=whitener)

    def stationary_basis(
        self,
        thetas: ThetaSet,
        gamma: NDArray[np.float64],
        spec: PrivacySpec,
        M: int,
    ) -> EigenSelection:
        if M < 1:
            raise ValueError("M must be at least 1")
        mapped = thetas.mapped(spec.map_A)
        phi = thetas.theta_P - np.einsum("nf,nfab->ab", np.asarray(gamma, dtype=float), mapped)
        return top_nonzero_eigvecs(phi, M)

    def solve_multipliers(
        self,
        thetas: ThetaSet,
        spec: PrivacySpec,
        thresholds: NDArray[np.float64],
        M: int,
    ) -> MultiplierSolution:
        """Search γ ≥ 0 for the best feasible stationary basis of rank at most M.

        Args:
            thetas: Gram matrices of the step
            spec: Privacy requirement supplying the map A
            thresholds: Loss budgets, shape (r+1)×|𝓕|
            M: Requested compressed dimension

        Returns:
            MultiplierSolution; ``feasible`` is False when no γ in the budget worked
        """
        if M < 1:
            raise ValueError("M must be at least 1")
        problem = _MultiplierProblem(thetas, spec, thresholds, M)
        start = problem.evaluate(np.zeros(problem.n_constraints))
        if problem.feasible(start):
            return self._solution(problem, start, feasible=True)

        gamma_max = self._gamma_max(problem)
        ceiling = problem.evaluate(np.full(problem.n_constraints, self._gamma_ceiling(gamma_max)))
        if not problem.feasible(ceiling):
            logger.debug(f"M={M}: infeasible even with saturated multipliers")
            return self._solution(problem, ceiling, feasible=False)

        best = self._coordinate_search(problem, gamma_max)
        if best is None:
            best = self._grid_fallback(problem, gamma_max)
        if best is None:
            logger.debug(f"M={M}: multiplier search found no feasible point")
            return self._solution(problem, ceiling, feasible=False)
        return self._solution(problem, best, feasible=True)

    def solve_centralized(
        self,
        pred: GaussianBelief,
        H: NDArray[np.float64],
        R: NDArray[np.float64],
        F_future: Sequence[NDArray[np.float64]],
        Q_future: Sequence[NDArray[np.float64]],
        spec: PrivacySpec,
        *,
        max_rank: Optional[int] = None,
    ) -> CompressionPlan:
        geom = step_geometry(pred, H, R, F_future, Q_future)
        return self.solve_geometry(geom, spec, max_rank=max_rank)

    def solve_geometry(
        self,
        geom: StepGeometry,
        spec: PrivacySpec,
        thresholds: Optional[NDArray[np.float64]] = None,
        *,
        thetas: Optional[ThetaSet] = None,
        max_rank: Optional[int] = None,
    ) -> CompressionPlan:
        """Run the M-descent loop on an already built step geometry.

        ``thresholds`` defaults to the geometry's own loss budgets; ``max_rank``
        further caps the starting M.
        """
        n_meas = geom.n_meas
        if thresholds is None:
            thresholds = all_thresholds(geom, spec)
        if n_meas == 0 or np.any(thresholds < 0):
            if n_meas:
                logger.debug(f"negative loss threshold {thresholds.min():.4g}: measurement discarded")
            return CompressionPlan.discard(n_meas, feasible=bool(np.all(thresholds >= 0)))

        if thetas is None:
            thetas = self.build_thetas(geom, spec)
        if spec.delta == 0:
            return self._information_preserving_plan(geom, thetas)

        cap = self.rank_cap(n_meas, spec, geom.depth)
        if max_rank is not None:
            cap = min(cap, max_rank)
        solution = self.solve_thetas(thetas, spec, thresholds, cap)
        if solution is None or solution.basis.count == 0:
            return CompressionPlan.discard(n_meas, feasible=True)
        matrix = solution.basis.vectors.T @ thetas.whitener
        return CompressionPlan(matrix=matrix, feasible=True, multipliers=solution.gamma.ravel())

    def solve_thetas(
        self,
        thetas: ThetaSet,
        spec: PrivacySpec,
        thresholds: NDArray[np.float64],
        max_rank: int,
    ) -> Optional[MultiplierSolution]:
        """Largest M (from ``max_rank`` down) with a feasible multiplier solution, else None."""
        for M in range(max_rank, 0, -1):
            solution = self.solve_multipliers(thetas, spec, thresholds, M)
            if solution.feasible:
                logger.debug(f"feasible at M={M} ({solution.basis.count} columns), utility={solution.utility:.6g}")
                return solution
        return None

    @staticmethod
    def rank_cap(n_meas: int, spec: PrivacySpec, depth: int) -> int:
        return min(n_meas, len(spec.public_idx) + (depth + 1) * len(spec.private_idx))

    def _information_preserving_plan(self, geom: StepGeometry, thetas: ThetaSet) -> CompressionPlan:
        # Vacuous floor: keep the whitened span of the full cross-covariance
        weights = thetas.whitener @ geom.G_by_n[0]
        basis = top_nonzero_eigvecs(weights @ weights.T, geom.n_meas)
        if basis.count == 0:
            return CompressionPlan.discard(geom.n_meas, feasible=True)
        return CompressionPlan(matrix=basis.vectors.T @ thetas.whitener, feasible=True)

    def _gamma_max(self, problem: _MultiplierProblem) -> float:
        scale = float(np.trace(problem.theta_P))
        smallest = float(np.min(problem.thresholds))
        denominator = max(smallest, 1e-9 * max(1.0, float(np.max(problem.thresholds))))
        return max(self._gamma_scale * scale / denominator, 1.0)

    def _gamma_ceiling(self, gamma_max: float) -> float:
        return gamma_max * 2.0**self._max_doublings

    def _coordinate_search(self, problem: _MultiplierProblem, gamma_max: float) -> Optional[_Candidate]:
        gamma = np.zeros(problem.n_constraints)
        best: Optional[_Candidate] = None
        stale_sweeps = 0
        for sweep in range(self._max_sweeps):
            previous = gamma.copy()
            best_before = best.utility if best is not None else -np.inf
            saturated = False
            for c in range(problem.n_constraints):
                value, candidate = self._bisect_coordinate(problem, gamma, c, gamma_max)
                if value is None:
                    saturated = True
                    break
                gamma[c] = value
                if problem.feasible(candidate):
                    best = _better(best, candidate)
            if saturated:
                break
            if problem.n_constraints == 1:
                break
            moved = float(np.max(np.abs(gamma - previous)))
            if moved <= 1e-9 * max(1.0, float(np.max(gamma))):
                break
            if best is not None and best.utility <= best_before + 1e-12 * max(1.0, abs(best_before)):
                stale_sweeps += 1
                if stale_sweeps >= 3:
                    break
            else:
                stale_sweeps = 0
        else:
            logger.debug(f"coordinate search hit the sweep budget ({self._max_sweeps})")
        return best

    def _bisect_coordinate(
        self,
        problem: _MultiplierProblem,
        gamma: NDArray[np.float64],
        c: int,
        gamma_max: float,
    ):
        """Smallest γ_c (others fixed) satisfying constraint c.

        Returns ``(None, candidate)`` when even the ceiling leaves c violated.
        """
        trial = gamma.copy()
        trial[c] = 0.0
        candidate = problem.evaluate(trial)
        if problem.satisfied(candidate, c):
            return 0.0, candidate

        ceiling = self._gamma_ceiling(gamma_max)
        hi = min(max(gamma_max, gamma[c]), ceiling)
        trial[c] = hi
        upper = problem.evaluate(trial)
        while not problem.satisfied(upper, c) and hi < ceiling:
            hi = min(2.0 * hi, ceiling)
            trial[c] = hi
            upper = problem.evaluate(trial)
        if not problem.satisfied(upper, c):
            logger.debug(f"constraint {c} unsatisfied at the ceiling gamma={hi:.3g}; stopping coordinate search")
            return None, upper

        lo = 0.0
        for _ in range(self._bisection_steps):
            if hi - lo <= 1e-12 * hi:
                break
            mid = 0.5 * (lo + hi)
            trial[c] = mid
            candidate = problem.evaluate(trial)
            if problem.satisfied(candidate, c):
                hi, upper = mid, candidate
            else:
                lo = mid
        return hi, upper

    def _grid_fallback(self, problem: _MultiplierProblem, gamma_max: float) -> Optional[_Candidate]:
        best: Optional[_Candidate] = None
        ones = np.ones(problem.n_constraints)
        for exponent in range(-10, self._max_doublings + 1):
            candidate = problem.evaluate(ones * gamma_max * 2.0**exponent)
            if problem.feasible(candidate):
                best = _better(best, candidate)
        return best

    @staticmethod
    def _solution(problem: _MultiplierProblem, candidate: _Candidate, *, feasible: bool) -> MultiplierSolution:
        return MultiplierSolution(
            gamma=candidate.gamma.reshape(problem.shape),
            basis=candidate.basis,
            feasible=feasible,
            utility=candidate.utility,
            losses=candidate.losses.reshape(problem.shape),
        )


def _better(best: Optional[_Candidate], candidate: _Candidate) -> _Candidate:
    if best is None or candidate.utility > best.utility:
        return candidate
    return best
