"""Normalizations applied before Newton-Schulz.

Frobenius scaling divides by ‖X‖_F. AOL scaling rescales column i by
1/√(Σⱼ |XᵀX|ᵢⱼ), which bounds the spectral norm by 1 (Gershgorin on the
rescaled Gram) and hands the rescaled Gram to the first iteration for free.

Both operate on the matrix as given; callers wanting the Gram on the shorter
side pass the transpose of wide matrices (see ``orient``).
"""
import logging
from typing import Optional, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import DimensionMismatchError, PreconditionError
from app.models.schemas import PreconditionResult, ScalingVector
from app.services.linalg_core import frobenius_norm, gram, symmetrize

logger = logging.getLogger(__name__)


def orient(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Transpose wide matrices so rows >= cols; returns (matrix, transposed)"""
    if x.shape[0] < x.shape[1]:
        return np.ascontiguousarray(x.T), True
    return x, False


def frobenius_precondition(x0: np.ndarray) -> PreconditionResult:
    norm = frobenius_norm(x0)
    if norm == 0.0:
        raise PreconditionError("cannot Frobenius-normalize the zero matrix")
    scale = 1.0 / norm
    x1 = (x0 * x0.dtype.type(scale)).astype(x0.dtype, copy=False)
    return PreconditionResult(
        x1=x1,
        scaling=ScalingVector(values=np.array([scale]), broadcast=True),
        preconditioner="frobenius",
    )


def aol_scaling_vector(a0: np.ndarray, clamp_floor: Optional[float] = None) -> ScalingVector:
    """sᵢ = 1/√(Σⱼ |A₀|ᵢⱼ) from a Gram matrix"""
    if a0.ndim != 2 or a0.shape[0] != a0.shape[1]:
        raise DimensionMismatchError(f"Gram matrix must be square, got {a0.shape}")
    clamp_floor = clamp_floor if clamp_floor is not None else settings.AOL_CLAMP_FLOOR
    row_sums = np.sum(np.abs(a0), axis=1, dtype=np.float64)
    if clamp_floor is not None:
        row_sums = np.maximum(row_sums, clamp_floor)
    zero = np.flatnonzero(~(row_sums > 0))
    if zero.size:
        raise PreconditionError(f"column {int(zero[0])} is zero, AOL scaling undefined", column=int(zero[0]))
    return ScalingVector(values=(1.0 / np.sqrt(row_sums)).astype(a0.dtype))


def rescale_gram(a0: np.ndarray, s: ScalingVector) -> np.ndarray:
    """sᵢ·A₀ᵢⱼ·sⱼ, i.e. the Gram of X₀·diag(s) without another matmul"""
    if a0.ndim != 2 or a0.shape[0] != a0.shape[1]:
        raise DimensionMismatchError(f"Gram matrix must be square, got {a0.shape}")
    try:
        cols = s.columns(a0.shape[0]).astype(a0.dtype, copy=False)
    except ValueError as e:
        raise DimensionMismatchError(str(e))
    return symmetrize(cols[:, None] * a0 * cols[None, :])


def aol_precondition(x0: np.ndarray, a0: Optional[np.ndarray] = None,
                     clamp_floor: Optional[float] = None) -> PreconditionResult:
    """Column-rescale x0 by the AOL vector and return the rescaled Gram alongside.

    `a0` may carry an already computed x0ᵀx0.
    """
    if a0 is None:
        a0 = gram(x0)
    s = aol_scaling_vector(a0, clamp_floor=clamp_floor)
    x1 = x0 * s.values[None, :]
    return PreconditionResult(x1=x1, scaling=s, preconditioner="aol", gram1=rescale_gram(a0, s))


def precondition(x0: np.ndarray, kind: str) -> PreconditionResult:
    if kind == "frobenius":
        return frobenius_precondition(x0)
    if kind == "aol":
        return aol_precondition(x0)
    raise ValueError(f"unknown preconditioner '{kind}'")
