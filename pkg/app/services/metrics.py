"""Error functionals, all evaluated in double precision.

    ortho_error(X)      = ‖XᵀX − I‖_F  (short-side Gram for wide X)
    polar_error(A, Q)   = ‖A − Q‖_F / √min(m, n)
    bias_error          = ‖Q − Q_aol‖_F / √n
    approx_error        = ‖Q_aol − result‖_F / √n

Q is the exact polar factor of the input and Q_aol the exact polar factor of
its AOL-preconditioned version; polar ≤ bias + approx by the triangle inequality.
"""
import logging
import math
from typing import Optional

import numpy as np

from app.core.errors import DimensionMismatchError, OracleError
from app.models.schemas import ErrorBreakdown
from app.services.linalg_core import frobenius_norm, polar_factor_exact, svd
from app.services.precondition import aol_precondition, orient

logger = logging.getLogger(__name__)

TRIANGLE_SLACK = 1e-6


def _double(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def ortho_error(x: np.ndarray) -> float:
    x = _double(x)
    short = x.T if x.shape[0] < x.shape[1] else x
    g = short.T @ short
    g[np.diag_indices_from(g)] -= 1.0
    return frobenius_norm(g)


def polar_error(approx: np.ndarray, reference_q: np.ndarray) -> float:
    approx, reference_q = _double(approx), _double(reference_q)
    _same_shape(approx, reference_q)
    return frobenius_norm(approx - reference_q) / math.sqrt(min(approx.shape))


def aol_polar_reference(x0: np.ndarray) -> np.ndarray:
    """Q_aol: exact polar factor of AOL(x0), in the orientation the pipelines use"""
    x, transposed = orient(_double(x0))
    q_aol = polar_factor_exact(aol_precondition(x).x1).q
    return np.ascontiguousarray(q_aol.T) if transposed else q_aol


def decompose(x0: np.ndarray, pipeline_result: np.ndarray, preconditioned_polar: np.ndarray,
              reference_q: Optional[np.ndarray] = None) -> ErrorBreakdown:
    """Split the polar error of a preconditioned pipeline into bias and approximation.

    `reference_q` may carry an already computed exact polar factor of x0.
    """
    x0, result, q_aol = _double(x0), _double(pipeline_result), _double(preconditioned_polar)
    _same_shape(x0, result)
    _same_shape(x0, q_aol)
    q = _double(reference_q) if reference_q is not None else polar_factor_exact(x0).q
    bias = polar_error(q_aol, q)
    approx = polar_error(result, q_aol)
    polar = polar_error(result, q)
    if polar > bias + approx + TRIANGLE_SLACK:
        raise OracleError(f"triangle inequality violated: polar {polar} > bias {bias} + approx {approx}")
    return ErrorBreakdown(
        polar_error=polar,
        ortho_error=ortho_error(result),
        bias_error=bias,
        approx_error=approx,
        n=min(x0.shape),
    )


def descent_alignment(g: np.ndarray, update: np.ndarray) -> float:
    """⟨G, update⟩_F = tr(Gᵀ·update)"""
    g, update = _double(g), _double(update)
    _same_shape(g, update)
    return float(np.sum(g * update))


def nuclear_norm(x: np.ndarray) -> float:
    return float(np.sum(svd(_double(x)).sigma))
