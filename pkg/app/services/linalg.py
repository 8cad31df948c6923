"""Deterministic symmetric-matrix helpers shared by every solver.

All routines symmetrize their input first and rely on ``scipy.linalg.eigh``;
eigenvector signs are normalised so identical inputs give identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from app.services.base import DimMismatchError, NotPsdError, NumericError, SingularMatrixError
from app.utils.logger import get_logger

logger = get_logger(__name__)

TOL_PD = 1e-12
ZERO_EIG_RELATIVE = 1e-10


@dataclass(frozen=True)
class EigenSelection:
    """Selected eigenpairs, columns of ``vectors`` paired with ``values``.

    For ordinary selections the columns are orthonormal. Generalized
    selections are unit-length but only orthogonal in the ``b`` inner product.
    """

    vectors: NDArray[np.float64]
    values: NDArray[np.float64]

    @property
    def count(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def empty(cls, dim: int) -> "EigenSelection":
        return cls(vectors=np.zeros((dim, 0)), values=np.zeros(0))


def symmetrize(m: NDArray[np.float64]) -> NDArray[np.float64]:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimMismatchError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"matrix of shape {m.shape} has non-finite entries")
    return 0.5 * (m + m.T)


def tol_psd(m: NDArray[np.float64]) -> float:
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    return 1e-9 * (1.0 + scale)


def _eigh(m: NDArray[np.float64]) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    if m.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    return sla.eigh(m)


def fix_signs(vectors: NDArray[np.float64]) -> NDArray[np.float64]:
    """Flip each column so its largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    out = vectors.copy()
    # argmax returns the lowest row index among equal magnitudes
    pivots = np.argmax(np.abs(out), axis=0)
    signs = np.sign(out[pivots, np.arange(out.shape[1])])
    signs[signs == 0] = 1.0
    return out * signs


def check_psd(m: NDArray[np.float64], name: str = "matrix") -> NDArray[np.float64]:
    """Return the symmetrized matrix or raise NotPsdError."""
    sym = symmetrize(m)
    values, _ = _eigh(sym)
    if values.size and values[0] < -tol_psd(sym):
        raise NotPsdError(f"{name} has eigenvalue {values[0]:.3e} below -tol_psd")
    return sym


def sym_sqrt(m: NDArray[np.float64]) -> NDArray[np.float64]:
    sym = symmetrize(m)
    values, vectors = _eigh(sym)
    if values.size and values[0] < -tol_psd(sym):
        raise NotPsdError(f"sym_sqrt: min eigenvalue {values[0]:.3e} below -tol_psd")
    root = (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T
    return symmetrize(root)


def sym_inv_sqrt(m: NDArray[np.float64], tol_pd: float = TOL_PD) -> NDArray[np.float64]:
    sym = symmetrize(m)
    values, vectors = _eigh(sym)
    if values.size and values[0] <= tol_pd:
        raise SingularMatrixError(
            f"sym_inv_sqrt: min eigenvalue {values[0]:.3e} not above {tol_pd:.1e}"
        )
    root = (vectors / np.sqrt(values)) @ vectors.T
    return symmetrize(root)


def floored_inverse(
    m: NDArray[np.float64],
    floor: float = TOL_PD,
    *,
    name: str = "matrix",
) -> NDArray[np.float64]:
    """Inverse of a PSD matrix through eigh, with eigenvalues floored at ``floor``.

    Raises:
        SingularMatrixError: if the matrix is indefinite beyond tolerance or
            has no eigenvalue above the floor.
    """
    sym = symmetrize(m)
    if sym.shape[0] == 0:
        return sym
    values, vectors = _eigh(sym)
    if values[0] < -tol_psd(sym) or values[-1] <= floor:
        raise SingularMatrixError(
            f"{name} is not invertible (eigenvalues in [{values[0]:.3e}, {values[-1]:.3e}])"
        )
    if values[0] < floor:
        logger.warning(
            f"{name}: {int(np.sum(values < floor))} eigenvalue(s) floored at {floor:.1e}"
        )
        values = np.maximum(values, floor)
    return symmetrize((vectors / values) @ vectors.T)


def top_nonzero_eigvecs(
    m: NDArray[np.float64],
    count: int,
    tol_zero: Optional[float] = None,
) -> EigenSelection:
    if count < 0:
        raise ValueError("count must be non-negative")
    sym = symmetrize(m)
    values, vectors = _eigh(sym)
    if tol_zero is None:
        tol_zero = ZERO_EIG_RELATIVE * (float(np.max(np.abs(values))) if values.size else 0.0)

    keep = np.flatnonzero(np.abs(values) > tol_zero)
    # eigh is ascending; reverse for descending order
    order = keep[::-1][:count]
    if order.size == 0:
        return EigenSelection.empty(sym.shape[0])
    return EigenSelection(vectors=fix_signs(vectors[:, order]), values=values[order].copy())


def generalized_eigh(
    a: NDArray[np.float64],
    b: NDArray[np.float64],
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """All generalized eigenpairs of the pencil (a, b), values ascending.

    The vectors are unit Euclidean length with the sign convention applied.
    """
    b_inv_root = sym_inv_sqrt(b)
    reduced = symmetrize(b_inv_root @ symmetrize(a) @ b_inv_root)
    values, w = _eigh(reduced)
    vectors = b_inv_root @ w
    norms = np.linalg.norm(vectors, axis=0)
    norms[norms == 0] = 1.0
    return values, fix_signs(vectors / norms)


def generalized_top_eigvecs(
    a: NDArray[np.float64],
    b: NDArray[np.float64],
    count: int,
) -> EigenSelection:
    if count < 0:
        raise ValueError("count must be non-negative")
    values, vectors = generalized_eigh(a, b)
    order = np.arange(values.size)[::-1][:count]
    return EigenSelection(vectors=vectors[:, order], values=values[order].copy())


def inertia(m: NDArray[np.float64], tol_zero: Optional[float] = None) -> Tuple[int, int, int]:
    sym = symmetrize(m)
    values = np.linalg.eigvalsh(sym) if sym.size else np.zeros(0)
    if tol_zero is None:
        tol_zero = ZERO_EIG_RELATIVE * (float(np.max(np.abs(values))) if values.size else 0.0)
    n_pos = int(np.sum(values > tol_zero))
    n_neg = int(np.sum(values < -tol_zero))
    return n_pos, n_neg, int(values.size) - n_pos - n_neg


def whitened_row_basis(
    a: NDArray[np.float64],
    b: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Right singular vectors of ``a @ b^{1/2}`` with non-zero singular values.

    With U from this basis, ``aᵀ (a b aᵀ)⁻¹ a == b^{-1/2} U Uᵀ b^{-1/2}``.
    """
    if a.shape[0] == 0:
        return np.zeros((a.shape[1], 0))
    _, singular, vt = np.linalg.svd(a @ sym_sqrt(b), full_matrices=False)
    cutoff = ZERO_EIG_RELATIVE * (singular[0] if singular.size else 0.0)
    return fix_signs(vt[singular > cutoff].T)


def full_row_rank(c: NDArray[np.float64], rel_tol: float = 1e-10) -> bool:
    if c.shape[0] == 0:
        return True
    if c.shape[0] > c.shape[1]:
        return False
    singular = np.linalg.svd(c, compute_uv=False)
    return bool(singular[-1] > rel_tol * singular[0])
