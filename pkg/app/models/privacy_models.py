"""Pydantic DTOs describing the privacy requirement and per-step geometry."""

from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from app.models.base import MODEL_CONFIG, Matrix


class FixedLookahead(BaseModel):
    model_config = MODEL_CONFIG

    kind: Literal["fixed"] = "fixed"
    depth: int = Field(default=0, ge=0)


class AutoLookahead(BaseModel):
    """Depth recomputed each step from the minimum predicted variance."""

    model_config = MODEL_CONFIG

    kind: Literal["auto"] = "auto"
    xi: float = Field(gt=0)
    epsilon: float = Field(gt=0)


LookaheadPolicy = Union[FixedLookahead, AutoLookahead]


class PrivacySpec(BaseModel):
    model_config = MODEL_CONFIG

    public_idx: List[int]
    private_idx: List[int]
    map_A: Matrix
    delta: float = Field(ge=0)
    lookahead: LookaheadPolicy = Field(default_factory=FixedLookahead, discriminator="kind")

    @field_validator("map_A")
    @classmethod
    def _non_negative_map(cls, value: np.ndarray) -> np.ndarray:
        if np.any(value < 0):
            raise ValueError("map_A must have non-negative entries")
        return value

    @model_validator(mode="after")
    def _check_partition(self):
        public, private = set(self.public_idx), set(self.private_idx)
        if len(public) != len(self.public_idx) or len(private) != len(self.private_idx):
            raise ValueError("index sets must not repeat entries")
        if public & private:
            raise ValueError("public and private index sets must be disjoint")
        if public | private != set(range(self.dim_state)):
            raise ValueError("public and private index sets must cover 0..L-1")
        if self.map_A.shape[1] != len(self.private_idx):
            raise ValueError(
                f"map_A has {self.map_A.shape[1]} columns for {len(self.private_idx)} private states"
            )
        return self

    @property
    def dim_state(self) -> int:
        return len(self.public_idx) + len(self.private_idx)

    @property
    def n_maps(self) -> int:
        return int(self.map_A.shape[0])

    def floor(self) -> np.ndarray:
        """The mapped floor 𝓕(δ·1)."""
        return self.map_A @ np.full(len(self.private_idx), self.delta)

    def with_delta(self, delta: float) -> "PrivacySpec":
        return self.model_copy(update={"delta": float(delta)})

    def with_lookahead(self, lookahead: LookaheadPolicy) -> "PrivacySpec":
        return self.model_copy(update={"lookahead": lookahead})

    @classmethod
    def partitioned(
        cls,
        n_public: int,
        n_private: int,
        *,
        delta: float,
        privacy_map: str = "trace",
        lookahead: Optional[LookaheadPolicy] = None,
    ) -> "PrivacySpec":
        """Public states first, private states last, with a named privacy map."""
        return cls(
            public_idx=list(range(n_public)),
            private_idx=list(range(n_public, n_public + n_private)),
            map_A=privacy_map_matrix(privacy_map, n_private),
            delta=delta,
            lookahead=lookahead or FixedLookahead(),
        )


def privacy_map_matrix(name: str, n_private: int) -> np.ndarray:
    if name == "trace":
        return np.ones((1, n_private))
    if name == "elementwise":
        return np.eye(n_private)
    raise ValueError(f"unknown privacy map '{name}'")


class StepGeometry(BaseModel):
    """Innovation covariance T, cross-covariances G_n and predicted covariances per horizon."""

    model_config = MODEL_CONFIG

    T: Matrix
    G_by_n: List[Matrix]
    P_pred_by_n: List[Matrix]

    @model_validator(mode="after")
    def _check_lengths(self):
        if len(self.G_by_n) != len(self.P_pred_by_n) or not self.G_by_n:
            raise ValueError("G_by_n and P_pred_by_n must be non-empty and of equal length")
        return self

    @property
    def depth(self) -> int:
        return len(self.G_by_n) - 1

    @property
    def n_meas(self) -> int:
        return int(self.T.shape[0])
