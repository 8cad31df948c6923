"""Multi-sensor compression with block-diagonal plans.

Two schemes are offered: every sensor solving alone on its local geometry
(no exchange), and a sequential broadcast schedule where each sensor
re-optimizes its block given the latest blocks of all others.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from app.config.settings import Settings
from app.models.filter_models import GaussianBelief
from app.models.privacy_models import PrivacySpec, StepGeometry
from app.models.sensor_models import BlockPlan, SensorPartition, SequentialTrace
from app.services.base import NumericError, SingularMatrixError
from app.services.central_solver_service import CentralizedSolver, ThetaSet
from app.services.linalg import floored_inverse, sym_inv_sqrt, symmetrize, whitened_row_basis
from app.services.privacy_service import (
    all_thresholds,
    private_error,
    public_error_trace,
    step_geometry,
)
from app.utils.logger import get_logger

logger = get_logger(__name__)

FEASIBILITY_SLACK = 1e-9


@dataclass(frozen=True)
class SequentialContext:
    """Geometry seen by sensor ``sensor`` once the other blocks are fixed.

    ``G_own`` and ``G_others`` are whitened by ``T_eff^{-1/2}``; ``xi`` holds the
    Gram matrices of their difference and ``fixed_D`` the reduction the
    other sensors achieve on their own, per horizon.
    """

    sensor: int
    T_eff: NDArray[np.float64]
    G_own: List[NDArray[np.float64]]
    G_others: List[NDArray[np.float64]]
    xi: ThetaSet
    fixed_D: List[NDArray[np.float64]]
    local_geom: StepGeometry


def _violation(losses: NDArray[np.float64], thresholds: NDArray[np.float64]) -> float:
    """Total loss in excess of the budgets, zero within the feasibility slack."""
    slack = FEASIBILITY_SLACK * np.maximum(1.0, np.abs(thresholds))
    return float(np.sum(np.maximum(losses - thresholds - slack, 0.0)))


def sensor_measurement(H: NDArray[np.float64], R: NDArray[np.float64], part: SensorPartition, s: int):
    rows = part.row_blocks[s]
    return H[rows], R[np.ix_(rows, rows)]


def independent_noise(R: NDArray[np.float64], part: SensorPartition) -> NDArray[np.float64]:
    """R with every cross-sensor block set to zero."""
    out = np.zeros_like(R)
    for rows in part.row_blocks:
        out[np.ix_(rows, rows)] = R[np.ix_(rows, rows)]
    return out


def local_geometry(geom: StepGeometry, part: SensorPartition, s: int) -> StepGeometry:
    rows = part.row_blocks[s]
    return StepGeometry(
        T=geom.T[np.ix_(rows, rows)],
        G_by_n=[G[rows] for G in geom.G_by_n],
        P_pred_by_n=list(geom.P_pred_by_n),
    )


def exact_block_reduction(
    geom: StepGeometry,
    part: SensorPartition,
    plan: BlockPlan,
    n: int,
) -> NDArray[np.float64]:
    """Covariance reduction of a block plan, evaluated with every cross-sensor term."""
    G = geom.G_by_n[n]
    active = [s for s in range(part.n_sensors) if plan.blocks[s].shape[0] > 0]
    if not active:
        return np.zeros((G.shape[1], G.shape[1]))

    stacked = np.vstack([plan.blocks[s] @ G[part.row_blocks[s]] for s in active])
    psi = np.block([
        [
            plan.blocks[i] @ geom.T[np.ix_(part.row_blocks[i], part.row_blocks[j])] @ plan.blocks[j].T
            for j in active
        ]
        for i in active
    ])
    try:
        solved = sla.solve(symmetrize(psi), stacked, assume_a="pos")
    except (sla.LinAlgError, np.linalg.LinAlgError) as exc:
        raise SingularMatrixError("block Gram matrix is not invertible") from exc
    return symmetrize(stacked.T @ solved)


def block_utility(geom: StepGeometry, part: SensorPartition, plan: BlockPlan, spec: PrivacySpec) -> float:
    return public_error_trace(exact_block_reduction(geom, part, plan, 0), spec)


def block_losses(geom: StepGeometry, part: SensorPartition, plan: BlockPlan, spec: PrivacySpec) -> NDArray[np.float64]:
    return np.vstack([
        private_error(exact_block_reduction(geom, part, plan, n), spec) for n in range(geom.depth + 1)
    ])


def sequential_context(
    geom: StepGeometry,
    part: SensorPartition,
    plan_others: BlockPlan,
    s: int,
    spec: PrivacySpec,
    *,
    eig_floor: float = 1e-12,
) -> SequentialContext:
    """Condition sensor s's geometry on the other sensors' current blocks (block ``s`` is ignored)."""
    own_rows = part.row_blocks[s]
    others = [t for t in range(part.n_sensors) if t != s and plan_others.blocks[t].shape[0] > 0]
    G_own_raw = [G[own_rows] for G in geom.G_by_n]
    n_state = geom.G_by_n[0].shape[1]

    if not others:
        T_eff = geom.T[np.ix_(own_rows, own_rows)]
        residual = G_own_raw
        explained = [np.zeros_like(G) for G in G_own_raw]
        fixed_D = [np.zeros((n_state, n_state)) for _ in geom.G_by_n]
    else:
        other_rows = [i for t in others for i in part.row_blocks[t]]
        C_others = sla.block_diag(*[plan_others.blocks[t] for t in others])
        T_oo = geom.T[np.ix_(other_rows, other_rows)]
        T_so = geom.T[np.ix_(own_rows, other_rows)]
        psi_inv = floored_inverse(C_others @ T_oo @ C_others.T, eig_floor, name="other sensors' Gram block")
        gain = T_so @ C_others.T @ psi_inv
        T_eff = symmetrize(geom.T[np.ix_(own_rows, own_rows)] - gain @ C_others @ T_so.T)
        explained, residual, fixed_D = [], [], []
        for G, G_own in zip(geom.G_by_n, G_own_raw):
            CG_others = C_others @ G[other_rows]
            explained.append(gain @ CG_others)
            residual.append(G_own - gain @ CG_others)
            fixed_D.append(symmetrize(CG_others.T @ psi_inv @ CG_others))

    whitener = sym_inv_sqrt(T_eff)
    G_own = [whitener @ G for G in G_own_raw]
    G_others = [whitener @ G for G in explained]
    xi = ThetaSet(
        theta_P=_four_term(G_own[0], G_others[0], spec.public_idx),
        theta_Q=np.stack([
            np.stack([_four_term(own, other, [j]) for j in spec.private_idx])
            for own, other in zip(G_own, G_others)
        ]),
        whitener=whitener,
    )
    local_geom = StepGeometry(T=T_eff, G_by_n=residual, P_pred_by_n=list(geom.P_pred_by_n))
    return SequentialContext(
        sensor=s,
        T_eff=T_eff,
        G_own=G_own,
        G_others=G_others,
        xi=xi,
        fixed_D=fixed_D,
        local_geom=local_geom,
    )


def _four_term(G_own: NDArray[np.float64], G_others: NDArray[np.float64], index: Sequence[int]) -> NDArray[np.float64]:
    own = G_own[:, list(index)]
    other = G_others[:, list(index)]
    return symmetrize(own @ own.T - own @ other.T - other @ own.T + other @ other.T)


def four_term_xi(ctx: SequentialContext, index: Sequence[int], n: int) -> NDArray[np.float64]:
    """Ξ for an index set, expanded as own/own − own/others − others/own + others/others."""
    return _four_term(ctx.G_own[n], ctx.G_others[n], index)


def assemble_reduction(ctx: SequentialContext, block: NDArray[np.float64], n: int) -> NDArray[np.float64]:
    """Fixed reduction of the others plus the focal sensor's conditional contribution."""
    if block.shape[0] == 0:
        return ctx.fixed_D[n]
    basis = whitened_row_basis(block, ctx.T_eff)
    difference = ctx.G_own[n] - ctx.G_others[n]
    projected = basis.T @ difference
    return symmetrize(ctx.fixed_D[n] + projected.T @ projected)


class SensorMailbox:
    """In-process message board holding the latest published block of each sensor."""

    def __init__(self, partition: SensorPartition) -> None:
        self._blocks: Dict[int, NDArray[np.float64]] = {}
        self._partition = partition
        self.model_messages = 0
        self.block_messages = 0

    def broadcast_model(self, s: int) -> None:
        self.model_messages += 1

    def publish(self, s: int, block: NDArray[np.float64]) -> None:
        snapshot = np.array(block, dtype=float)
        snapshot.setflags(write=False)
        self._blocks[s] = snapshot
        self.block_messages += 1

    def snapshot(self, feasible: bool = True) -> BlockPlan:
        blocks = [
            self._blocks.get(s, np.zeros((0, n_s))) for s, n_s in enumerate(self._partition.dims)
        ]
        return BlockPlan(partition=self._partition, blocks=blocks, feasible=feasible)


class DecentralizedSolver:
    def __init__(
        self,
        settings: Optional[Settings] = None,
        *,
        central: Optional[CentralizedSolver] = None,
        sensor_order: Optional[Sequence[int]] = None,
    ) -> None:
        self.settings = settings or Settings()
        self.central = central or CentralizedSolver(self.settings)
        self._sensor_order = list(sensor_order) if sensor_order is not None else None

    def solve_no_exchange(
        self,
        preds: Sequence[GaussianBelief],
        H_blocks: Sequence[NDArray[np.float64]],
        R_blocks: Sequence[NDArray[np.float64]],
        F_future: Sequence[NDArray[np.float64]],
        Q_future: Sequence[NDArray[np.float64]],
        spec: PrivacySpec,
        deltas: Sequence[float],
        part: SensorPartition,
    ) -> BlockPlan:
        """Each sensor designs its block from its own measurement and local belief only."""
        blocks = []
        all_feasible = True
        for s in range(part.n_sensors):
            try:
                plan = self.central.solve_centralized(
                    preds[s],
                    H_blocks[s],
                    R_blocks[s],
                    F_future,
                    Q_future,
                    spec.with_delta(deltas[s]),
                    max_rank=part.cap(s),
                )
                blocks.append(plan.matrix)
                all_feasible = all_feasible and plan.feasible
            except NumericError as exc:
                logger.warning(f"sensor {s}: local design failed ({exc}); discarding its measurement")
                blocks.append(np.zeros((0, part.dims[s])))
                all_feasible = False
        return BlockPlan(partition=part, blocks=blocks, feasible=all_feasible)

    def solve_local_given_others(
        self,
        ctx: SequentialContext,
        spec: PrivacySpec,
        thresholds: NDArray[np.float64],
        max_rank: Optional[int] = None,
    ) -> NDArray[np.float64]:
        """Best block for the focal sensor, budgets reduced by what the others already leak."""
        fixed_losses = np.vstack([private_error(D, spec) for D in ctx.fixed_D])
        local_thresholds = thresholds - fixed_losses
        plan = self.central.solve_geometry(
            ctx.local_geom,
            spec,
            local_thresholds,
            thetas=ctx.xi,
            max_rank=max_rank,
        )
        return plan.matrix

    def run_sequential(
        self,
        pred: GaussianBelief,
        H: NDArray[np.float64],
        R: NDArray[np.float64],
        F_future: Sequence[NDArray[np.float64]],
        Q_future: Sequence[NDArray[np.float64]],
        spec: PrivacySpec,
        part: SensorPartition,
        *,
        eps_conv: Optional[float] = None,
        max_iter: Optional[int] = None,
        local_preds: Optional[Sequence[GaussianBelief]] = None,
    ) -> tuple[BlockPlan, SequentialTrace]:
        """Round-robin refinement of the blocks, started from the no-exchange design.

        Returns:
            The final plan and the per-sweep utility trace with message counts
        """
        eps_conv = eps_conv if eps_conv is not None else self.settings.SEQUENTIAL_EPS_CONV
        max_iter = max_iter if max_iter is not None else self.settings.SEQUENTIAL_MAX_SWEEPS
        order = self._sensor_order or list(range(part.n_sensors))

        geom = step_geometry(pred, H, R, F_future, Q_future)
        thresholds = all_thresholds(geom, spec)
        preds = list(local_preds) if local_preds is not None else [pred] * part.n_sensors
        measurement = [sensor_measurement(H, R, part, s) for s in range(part.n_sensors)]

        initial = self.solve_no_exchange(
            preds,
            [h for h, _ in measurement],
            [r for _, r in measurement],
            F_future,
            Q_future,
            spec,
            [spec.delta / part.n_sensors] * part.n_sensors,
            part,
        )
        mailbox = SensorMailbox(part)
        for s in range(part.n_sensors):
            mailbox.broadcast_model(s)
            mailbox.publish(s, initial.blocks[s])

        previous = block_utility(geom, part, initial, spec)
        previous_violation = _violation(block_losses(geom, part, initial, spec), thresholds)
        utilities: List[float] = []
        violations: List[float] = []
        converged = False
        sweeps = 0
        for sweeps in range(1, max_iter + 1):
            for s in order:
                plan = mailbox.snapshot()
                ctx = sequential_context(geom, part, plan, s, spec, eig_floor=self.settings.EIG_FLOOR)
                candidate = self.solve_local_given_others(ctx, spec, thresholds, part.cap(s))
                mailbox.publish(s, self._keep_better(ctx, spec, thresholds, plan.blocks[s], candidate))
            snapshot = mailbox.snapshot()
            current = block_utility(geom, part, snapshot, spec)
            violation = _violation(block_losses(geom, part, snapshot, spec), thresholds)
            utilities.append(current)
            violations.append(violation)
            logger.debug(f"sequential sweep {sweeps}: utility={current:.8g} violation={violation:.3g}")
            if abs(current - previous) < eps_conv and abs(violation - previous_violation) < eps_conv:
                converged = True
                break
            previous, previous_violation = current, violation

        final = mailbox.snapshot()
        losses = block_losses(geom, part, final, spec)
        feasible = _violation(losses, thresholds) == 0.0
        if not feasible and np.all(thresholds >= 0):
            logger.warning("sequential schedule ended infeasible; releasing nothing this step")
            final = BlockPlan.empty(part, feasible=True)
            feasible = True
        trace = SequentialTrace(
            utilities=utilities,
            violations=violations,
            sweeps=sweeps,
            converged=converged,
            model_messages=mailbox.model_messages,
            block_messages=mailbox.block_messages,
        )
        if not converged:
            logger.warning(f"sequential schedule stopped after {max_iter} sweeps without converging")
        return final.model_copy(update={"feasible": feasible}), trace

    @staticmethod
    def _keep_better(
        ctx: SequentialContext,
        spec: PrivacySpec,
        thresholds: NDArray[np.float64],
        current: NDArray[np.float64],
        candidate: NDArray[np.float64],
    ) -> NDArray[np.float64]:
        def evaluate(block):
            reductions = [assemble_reduction(ctx, block, n) for n in range(len(ctx.fixed_D))]
            losses = np.vstack([private_error(D, spec) for D in reductions])
            return _violation(losses, thresholds), public_error_trace(reductions[0], spec)

        # Lexicographic: constraint violation first, then utility
        current_violation, current_utility = evaluate(current)
        candidate_violation, candidate_utility = evaluate(candidate)
        if candidate_violation < current_violation - FEASIBILITY_SLACK:
            return candidate
        if candidate_violation <= current_violation + FEASIBILITY_SLACK and candidate_utility > current_utility + 1e-12:
            return candidate
        return current
