"""Shared helpers for service modules (exceptions, shape checks)"""

from typing import Sequence

import numpy as np


class ServiceError(Exception):
    """Base exception for service layer errors."""


class ConfigError(ServiceError):
    """Raised when a scenario file or command-line option is invalid."""


class NumericError(ServiceError):
    """Base exception for failures of the numerical pipeline."""


class NotPsdError(NumericError):
    """Raised when a matrix expected to be PSD has a negative eigenvalue."""


class SingularMatrixError(NumericError):
    """Raised when a matrix that must be inverted is (numerically) singular."""


class DimMismatchError(NumericError):
    """Raised when matrix or vector shapes do not agree."""


class NoFiniteBoundError(NumericError):
    """Raised when no finite look-ahead depth can satisfy the privacy floor."""


class AllRowsDroppedError(NumericError):
    """Raised when a baseline mechanism keeps no compression row."""


class EmptyNullspaceError(NumericError):
    """Raised when a measurement block has no left null space to project on."""


class AnchorCollisionError(NumericError):
    """Raised when a position estimate sits on top of a ranging anchor."""


def require_shape(name: str, array: np.ndarray, shape: Sequence[int]) -> None:
    """Raise DimMismatchError unless ``array`` has exactly ``shape``."""
    if tuple(array.shape) != tuple(shape):
        raise DimMismatchError(f"{name} has shape {array.shape}, expected {tuple(shape)}")
