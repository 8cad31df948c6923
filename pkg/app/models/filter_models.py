"""Pydantic value objects for the filter: beliefs and compression plans, plus the LDS model."""

from dataclasses import dataclass
from typing import Callable, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, model_validator

from app.models.base import MODEL_CONFIG, Matrix, Vector
from app.services.base import DimMismatchError, NotPsdError, SingularMatrixError

BeliefStage = Literal["predicted", "updated"]


def _psd_tolerance(m: np.ndarray) -> float:
    return 1e-9 * (1.0 + (float(np.max(np.abs(m))) if m.size else 0.0))


class GaussianBelief(BaseModel):
    model_config = MODEL_CONFIG

    mean: Vector
    cov: Matrix
    stage: BeliefStage = "updated"

    @model_validator(mode="after")
    def _check_cov(self):
        dim = self.mean.shape[0]
        if self.cov.shape != (dim, dim):
            raise DimMismatchError(f"cov has shape {self.cov.shape}, expected {(dim, dim)}")
        if dim and np.linalg.eigvalsh(0.5 * (self.cov + self.cov.T))[0] < -_psd_tolerance(self.cov):
            raise NotPsdError("belief covariance is not PSD")
        return self

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    def with_stage(self, stage: BeliefStage) -> "GaussianBelief":
        return GaussianBelief(mean=self.mean, cov=self.cov, stage=stage)


class CompressionPlan(BaseModel):
    """Compression matrix C (M×N); M = 0 means the measurement is discarded."""

    model_config = MODEL_CONFIG

    matrix: Matrix
    feasible: bool = True
    multipliers: Optional[Vector] = None

    @model_validator(mode="after")
    def _check_rank(self):
        rows, cols = self.matrix.shape
        if rows > cols:
            raise DimMismatchError(f"plan has {rows} rows for a {cols}-dim measurement")
        if rows:
            singular = np.linalg.svd(self.matrix, compute_uv=False)
            if singular[-1] <= 1e-10 * singular[0]:
                raise SingularMatrixError("compression matrix is not full row rank")
        return self

    @property
    def rank_target(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def n_meas(self) -> int:
        return int(self.matrix.shape[1])

    @classmethod
    def discard(cls, n_meas: int, feasible: bool) -> "CompressionPlan":
        return cls(matrix=np.zeros((0, n_meas)), feasible=feasible)

    @classmethod
    def identity(cls, n_meas: int) -> "CompressionPlan":
        return cls(matrix=np.eye(n_meas), feasible=True)


@dataclass(frozen=True)
class LdsModel:
    """Time-indexed system matrices.

    ``transition`` and ``process_noise`` must be total over k >= 1 so that
    look-ahead steps can query future F and Q. ``measurement`` returns the
    pair (H_k, R_k); its row count may change from step to step.
    """

    dim_state: int
    dim_meas: int
    transition: Callable[[int], np.ndarray]
    process_noise: Callable[[int], np.ndarray]
    measurement: Callable[[int], Tuple[np.ndarray, np.ndarray]]

    def transition_at(self, k: int) -> np.ndarray:
        f = np.asarray(self.transition(k), dtype=float)
        if f.shape != (self.dim_state, self.dim_state):
            raise DimMismatchError(f"F_{k} has shape {f.shape}")
        return f

    def process_noise_at(self, k: int) -> np.ndarray:
        q = np.asarray(self.process_noise(k), dtype=float)
        if q.shape != (self.dim_state, self.dim_state):
            raise DimMismatchError(f"Q_{k} has shape {q.shape}")
        q = 0.5 * (q + q.T)
        if np.linalg.eigvalsh(q)[0] < -_psd_tolerance(q):
            raise NotPsdError(f"Q_{k} is not PSD")
        return q

    def measurement_at(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        h, r = self.measurement(k)
        h = np.asarray(h, dtype=float).reshape(-1, self.dim_state)
        r = np.asarray(r, dtype=float).reshape(h.shape[0], h.shape[0])
        r = 0.5 * (r + r.T)
        if h.shape[0] and np.linalg.eigvalsh(r)[0] <= 0.0:
            raise NotPsdError(f"R_{k} is not positive definite")
        return h, r

    def future(self, k: int, depth: int) -> Tuple[list, list]:
        """F_{k+1..k+depth} and Q_{k+1..k+depth}."""
        steps = range(k + 1, k + depth + 1)
        return [self.transition_at(t) for t in steps], [self.process_noise_at(t) for t in steps]

    @classmethod
    def time_invariant(cls, f, q, h, r) -> "LdsModel":
        f, q, h, r = (np.asarray(m, dtype=float) for m in (f, q, h, r))
        return cls(
            dim_state=f.shape[0],
            dim_meas=h.shape[0],
            transition=lambda _k: f,
            process_noise=lambda _k: q,
            measurement=lambda _k: (h, r),
        )
