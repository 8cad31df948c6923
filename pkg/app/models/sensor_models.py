"""Pydantic DTOs for splitting a measurement across sensors."""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from app.models.base import MODEL_CONFIG, Matrix
from app.models.filter_models import CompressionPlan


class SensorPartition(BaseModel):
    """Ordered row blocks I_s of the stacked measurement; optional caps M_s."""

    model_config = MODEL_CONFIG

    row_blocks: List[List[int]]
    comp_dims: Optional[List[int]] = None

    @model_validator(mode="after")
    def _check_blocks(self):
        rows = [i for block in self.row_blocks for i in block]
        if any(len(block) == 0 for block in self.row_blocks):
            raise ValueError("every sensor needs at least one measurement row")
        if sorted(rows) != list(range(len(rows))):
            raise ValueError("row blocks must partition 0..N-1")
        if self.comp_dims is not None:
            if len(self.comp_dims) != len(self.row_blocks):
                raise ValueError("comp_dims needs one entry per sensor")
            for m_s, block in zip(self.comp_dims, self.row_blocks):
                if not 0 <= m_s <= len(block):
                    raise ValueError("comp_dims entries must lie in 0..N_s")
        return self

    @property
    def n_sensors(self) -> int:
        return len(self.row_blocks)

    @property
    def n_meas(self) -> int:
        return sum(len(block) for block in self.row_blocks)

    @property
    def dims(self) -> List[int]:
        return [len(block) for block in self.row_blocks]

    def cap(self, s: int) -> int:
        return self.dims[s] if self.comp_dims is None else self.comp_dims[s]

    @classmethod
    def from_dims(cls, dims: List[int]) -> "SensorPartition":
        blocks, start = [], 0
        for size in dims:
            blocks.append(list(range(start, start + size)))
            start += size
        return cls(row_blocks=blocks)

    @classmethod
    def even(cls, n_meas: int, n_sensors: int) -> "SensorPartition":
        if n_sensors < 1 or n_meas < n_sensors:
            raise ValueError("need at least one row per sensor")
        base, extra = divmod(n_meas, n_sensors)
        return cls.from_dims([base + (1 if s < extra else 0) for s in range(n_sensors)])


class BlockPlan(BaseModel):
    """Per-sensor compression blocks C_s (M_s × N_s)."""

    model_config = MODEL_CONFIG

    partition: SensorPartition
    blocks: List[Matrix]
    feasible: bool = True

    @model_validator(mode="after")
    def _check_blocks(self):
        if len(self.blocks) != self.partition.n_sensors:
            raise ValueError("one block per sensor is required")
        for block, n_s in zip(self.blocks, self.partition.dims):
            if block.shape[1] != n_s or block.shape[0] > n_s:
                raise ValueError(f"block of shape {block.shape} does not fit a {n_s}-row sensor")
        return self

    @property
    def comp_dims(self) -> List[int]:
        return [int(block.shape[0]) for block in self.blocks]

    @property
    def assembled(self) -> np.ndarray:
        """Block-diagonal C placed on the sensors' measurement rows."""
        matrix = np.zeros((sum(self.comp_dims), self.partition.n_meas))
        row = 0
        for block, rows in zip(self.blocks, self.partition.row_blocks):
            matrix[row:row + block.shape[0], rows] = block
            row += block.shape[0]
        return matrix

    def with_block(self, s: int, block: np.ndarray, *, feasible: Optional[bool] = None) -> "BlockPlan":
        blocks = list(self.blocks)
        blocks[s] = block
        return BlockPlan(
            partition=self.partition,
            blocks=blocks,
            feasible=self.feasible if feasible is None else feasible,
        )

    def as_plan(self) -> CompressionPlan:
        return CompressionPlan(matrix=self.assembled, feasible=self.feasible)

    @classmethod
    def empty(cls, partition: SensorPartition, feasible: bool = True) -> "BlockPlan":
        return cls(
            partition=partition,
            blocks=[np.zeros((0, n_s)) for n_s in partition.dims],
            feasible=feasible,
        )


class SequentialTrace(BaseModel):
    """Utility and total budget excess after every sweep plus message counts of the schedule."""

    model_config = MODEL_CONFIG

    utilities: List[float] = Field(default_factory=list)
    violations: List[float] = Field(default_factory=list)
    sweeps: int = 0
    converged: bool = False
    model_messages: int = 0
    block_messages: int = 0
