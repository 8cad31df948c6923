"""Closed-loop experiment driver: simulate, design a compression, update, record."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from app.config.settings import Settings
from app.models.filter_models import CompressionPlan, GaussianBelief
from app.models.privacy_models import PrivacySpec, StepGeometry
from app.models.scenario_models import ScenarioConfig, StepRecord
from app.models.sensor_models import SensorPartition
from app.services.base import NumericError
from app.services.baseline_service import baseline_compression, calibrate_tradeoff
from app.services.central_solver_service import CentralizedSolver
from app.services.decentral_solver_service import (
    DecentralizedSolver,
    independent_noise,
    sensor_measurement,
)
from app.services.kalman_service import compressed_update, predict, sample_gaussian, simulate_step
from app.services.privacy_service import (
    all_thresholds,
    lookahead_depth,
    privacy_loss,
    private_error,
    public_error_trace,
    step_geometry,
    utility,
)
from app.services.scenario_service import NOISE_STREAM, build_model, initial_belief, stream_rng
from app.utils.logger import get_logger

logger = get_logger(__name__)

SWEEP_FIELDS = {"delta": "delta", "omega": "omega", "lookahead": "lookahead_depth"}
FEASIBILITY_SLACK = 1e-9


@dataclass(frozen=True)
class _StepDesign:
    plan: CompressionPlan
    M_used: List[int]
    feasible: bool
    utility: float
    local_blocks: Optional[List[NDArray[np.float64]]] = None


def _within_thresholds(geom: StepGeometry, plan: CompressionPlan, spec: PrivacySpec) -> bool:
    thresholds = all_thresholds(geom, spec)
    losses = np.vstack([privacy_loss(geom, plan, spec, n) for n in range(geom.depth + 1)])
    return bool(np.all(losses <= thresholds + FEASIBILITY_SLACK * np.maximum(1.0, np.abs(thresholds))))


class ExperimentService:
    def __init__(self, settings: Optional[Settings] = None, *, record_wall_time: Optional[bool] = None):
        self.settings = settings or Settings()
        self.central = CentralizedSolver(self.settings)
        self.record_wall_time = (
            self.settings.RECORD_WALL_TIME if record_wall_time is None else record_wall_time
        )

    def run_experiment(self, cfg: ScenarioConfig, trial: int = 0) -> List[StepRecord]:
        """One closed-loop trial; a NumericError ends it with a diagnostic record.

        Returns:
            One StepRecord per completed step (plus the diagnostic one on abort)
        """
        model = build_model(cfg, trial)
        spec = cfg.privacy_spec()
        part = cfg.partition()
        decentral = self._decentral(cfg) if part is not None else None
        rng = stream_rng(cfg.seed, trial, NOISE_STREAM)

        belief = initial_belief(cfg)
        local_beliefs = [belief] * part.n_sensors if part is not None else []
        x = belief.mean + sample_gaussian(rng, belief.cov)
        records: List[StepRecord] = []

        for k in range(1, cfg.steps + 1):
            pred = None
            try:
                F, Q = model.transition_at(k), model.process_noise_at(k)
                H, R = model.measurement_at(k)
                x, z = simulate_step(rng, x, F, Q, H, R)
                pred = predict(belief, F, Q)
                depth = lookahead_depth(spec, pred)
                F_future, Q_future = model.future(k, depth)

                started = time.perf_counter_ns()
                local_preds = [predict(local, F, Q) for local in local_beliefs]
                design = self._design(cfg, spec, part, decentral, pred, local_preds, H, R, F_future, Q_future)
                wall_ns = time.perf_counter_ns() - started if self.record_wall_time else 0

                belief = compressed_update(pred, z, H, R, design.plan, eig_floor=self.settings.EIG_FLOOR)
                if design.local_blocks is not None:
                    local_beliefs = self._update_locals(local_preds, z, H, R, part, design.local_blocks)
            except NumericError as exc:
                logger.warning(f"trial {trial} aborted at step {k}: {exc}", exc_info=True)
                snapshot = pred if pred is not None else belief
                records.append(self._record(trial, k, snapshot, spec, [], False, 0.0, 0, 0, error=str(exc)))
                break
            records.append(
                self._record(trial, k, belief, spec, design.M_used, design.feasible, design.utility, depth, wall_ns)
            )

        logger.debug(f"trial {trial}: {len(records)} steps recorded (scheme={cfg.scheme})")
        return records

    def trial_count(self, cfg: ScenarioConfig, trials: Optional[int] = None) -> int:
        """Explicit count, else the scenario's, else DEFAULT_TRIALS."""
        return trials or cfg.trials or self.settings.DEFAULT_TRIALS

    def run_trials(self, cfg: ScenarioConfig, trials: Optional[int] = None) -> List[StepRecord]:
        count = self.trial_count(cfg, trials)
        records: List[StepRecord] = []
        for trial in range(count):
            records.extend(self.run_experiment(cfg, trial))
        logger.info(f"ran {count} trial(s) of scheme={cfg.scheme}, {len(records)} step records")
        return records

    def sweep(
        self,
        cfg: ScenarioConfig,
        param: str,
        values: Sequence[float],
        trials: Optional[int] = None,
    ) -> List[Dict[str, float]]:
        """Mean final-step τ and η_min per grid value, plus the feasible fraction over all steps."""
        if param not in SWEEP_FIELDS:
            raise ValueError(f"cannot sweep '{param}'; choose from {sorted(SWEEP_FIELDS)}")
        rows = []
        for value in values:
            overrides = {SWEEP_FIELDS[param]: value}
            if param == "lookahead":
                overrides.update(lookahead="fixed", lookahead_depth=int(value))
            point = cfg.with_overrides(**overrides)
            records = self.run_trials(point, trials)
            finals = _final_records(records)
            rows.append({
                "param": param,
                "value": float(value),
                "mean_tau": float(np.mean([r.tau for r in finals])),
                "mean_eta_min": float(np.mean([r.eta_min for r in finals])),
                "frac_feasible": float(np.mean([r.feasible for r in records])),
            })
            logger.info(f"sweep {param}={value}: mean tau {rows[-1]['mean_tau']:.6g}")
        return rows

    def compare_baselines(
        self,
        cfg: ScenarioConfig,
        trials: Optional[int] = None,
        *,
        target: Optional[float] = None,
        calibration_trials: int = 2,
    ) -> List[Dict[str, float]]:
        """Proposed scheme against IB, PF and CP, each calibrated to the same final-step η.

        The default target is the summed privacy floor.
        """
        spec = cfg.privacy_spec()
        target = float(np.sum(spec.floor())) if target is None else target
        proposed = cfg.with_overrides(scheme="centralized")
        rows = [self._summary_row("proposed", float("nan"), 0, self.run_trials(proposed, trials))]

        calibration = proposed.with_overrides(trials=min(calibration_trials, self.trial_count(cfg, trials)))
        for kind in ("ib", "pf", "cp"):
            def evaluate(gamma: float, M: int, kind=kind) -> float:
                trial_cfg = calibration.with_overrides(
                    scheme="baseline", baseline_kind=kind, baseline_gamma=gamma, baseline_rank=M
                )
                finals = _final_records(self.run_trials(trial_cfg))
                return float(np.mean([r.eta_sum for r in finals]))

            result = calibrate_tradeoff(
                evaluate,
                target,
                m_values=range(1, cfg.dim_meas + 1),
                grid_size=2 if kind == "pf" else 13,
                bisection_steps=20,
                prefer_above=True,
            )
            tuned = proposed.with_overrides(
                scheme="baseline", baseline_kind=kind, baseline_gamma=result.gamma, baseline_rank=result.M
            )
            rows.append(self._summary_row(kind, result.gamma, result.M, self.run_trials(tuned, trials)))
        return rows

    def _decentral(self, cfg: ScenarioConfig) -> DecentralizedSolver:
        return DecentralizedSolver(self.settings, central=self.central, sensor_order=cfg.sensor_order)

    def _design(
        self,
        cfg: ScenarioConfig,
        spec: PrivacySpec,
        part: Optional[SensorPartition],
        decentral: Optional[DecentralizedSolver],
        pred: GaussianBelief,
        local_preds: List[GaussianBelief],
        H: NDArray[np.float64],
        R: NDArray[np.float64],
        F_future: list,
        Q_future: list,
    ) -> _StepDesign:
        geom = step_geometry(pred, H, R, F_future, Q_future)

        if cfg.scheme == "unsanitized":
            plan = CompressionPlan.identity(geom.n_meas)
            return _StepDesign(plan, [plan.rank_target], _within_thresholds(geom, plan, spec), utility(geom, plan, spec))

        if cfg.scheme == "centralized":
            plan = self.central.solve_geometry(geom, spec)
            return _StepDesign(plan, [plan.rank_target], plan.feasible, utility(geom, plan, spec))

        if cfg.scheme == "baseline":
            rank = min(cfg.baseline_rank or geom.n_meas, max(geom.n_meas, 1))
            plan = baseline_compression(cfg.baseline_kind, geom, pred, H, spec, cfg.baseline_gamma, rank)
            return _StepDesign(plan, [plan.rank_target], _within_thresholds(geom, plan, spec), utility(geom, plan, spec))

        design_R = independent_noise(R, part) if cfg.independent_noise else R
        if cfg.scheme == "no_exchange":
            measurement = [sensor_measurement(H, design_R, part, s) for s in range(part.n_sensors)]
            blocks = decentral.solve_no_exchange(
                local_preds,
                [h for h, _ in measurement],
                [r for _, r in measurement],
                F_future,
                Q_future,
                spec,
                [spec.delta / part.n_sensors] * part.n_sensors,
                part,
            )
        else:
            blocks, trace = decentral.run_sequential(
                pred,
                H,
                design_R,
                F_future,
                Q_future,
                spec,
                part,
                eps_conv=cfg.eps_conv,
                max_iter=cfg.max_sweeps,
            )
            logger.debug(f"sequential schedule: {trace.sweeps} sweep(s), {trace.block_messages} block messages")

        plan = blocks.as_plan()
        return _StepDesign(
            plan,
            blocks.comp_dims,
            _within_thresholds(geom, plan, spec),
            utility(geom, plan, spec),
            local_blocks=list(blocks.blocks),
        )

    def _update_locals(
        self,
        local_preds: List[GaussianBelief],
        z: NDArray[np.float64],
        H: NDArray[np.float64],
        R: NDArray[np.float64],
        part: SensorPartition,
        blocks: List[NDArray[np.float64]],
    ) -> List[GaussianBelief]:
        updated = []
        for s, local in enumerate(local_preds):
            rows = part.row_blocks[s]
            H_s, R_s = sensor_measurement(H, R, part, s)
            plan = CompressionPlan(matrix=blocks[s])
            updated.append(compressed_update(local, z[rows], H_s, R_s, plan, eig_floor=self.settings.EIG_FLOOR))
        return updated

    @staticmethod
    def _record(
        trial: int,
        k: int,
        belief: GaussianBelief,
        spec: PrivacySpec,
        M_used: List[int],
        feasible: bool,
        step_utility: float,
        depth: int,
        wall_ns: int,
        *,
        error: Optional[str] = None,
    ) -> StepRecord:
        eta = private_error(belief.cov, spec)
        return StepRecord(
            trial=trial,
            k=k,
            tau=max(public_error_trace(belief.cov, spec), 0.0),
            eta=eta,
            eta_min=float(np.min(eta)),
            eta_sum=float(np.sum(eta)),
            M_used=M_used,
            feasible=feasible,
            utility=step_utility,
            lookahead=depth,
            wall_ns=wall_ns,
            error=error,
        )

    @staticmethod
    def _summary_row(scheme: str, gamma: float, M: int, records: List[StepRecord]) -> Dict[str, float]:
        finals = _final_records(records)
        return {
            "scheme": scheme,
            "gamma": gamma,
            "M": M,
            "mean_tau": float(np.mean([r.tau for r in finals])),
            "mean_eta": float(np.mean([r.eta_sum for r in finals])),
            "frac_feasible": float(np.mean([r.feasible for r in records])),
        }


def _final_records(records: Sequence[StepRecord]) -> List[StepRecord]:
    """Last record of every trial, in trial order."""
    return [group[-1] for _, group in sorted(records_by_trial(records).items())]


def records_by_trial(records: Sequence[StepRecord]) -> Dict[int, List[StepRecord]]:
    grouped: Dict[int, List[StepRecord]] = {}
    for record in records:
        grouped.setdefault(record.trial, []).append(record)
    return grouped


