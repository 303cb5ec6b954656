"""Dense real-matrix arithmetic and the exact SVD / polar-factor oracle.

Matrices are 2-D numpy arrays in ``float32`` ("single") or ``float64``
("double"). The oracle (``svd``, ``polar_factor_exact``) always runs in double.
"""
import logging
from typing import Optional

import numpy as np
import scipy.linalg

from app.core.config import settings
from app.core.errors import ConvergenceError, DimensionMismatchError, NonFiniteError, OracleError
from app.models.schemas import PolarFactor, SvdResult

logger = logging.getLogger(__name__)

DTYPES = {"single": np.float32, "double": np.float64}


def dtype_for(precision: Optional[str] = None) -> np.dtype:
    precision = precision or settings.PRECISION
    try:
        return np.dtype(DTYPES[precision])
    except KeyError:
        raise ValueError(f"unknown precision '{precision}', expected one of {sorted(DTYPES)}")


def precision_of(x: np.ndarray) -> str:
    return "single" if x.dtype == np.float32 else "double"


def as_matrix(data, precision: Optional[str] = None) -> np.ndarray:
    """Validate and convert `data` into a finite, C-contiguous 2-D matrix"""
    x = np.ascontiguousarray(np.asarray(data, dtype=dtype_for(precision)))
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise DimensionMismatchError(f"expected a non-empty 2-D matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("matrix contains NaN or Inf entries")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(f"cannot multiply {a.shape} by {b.shape}")
    return np.matmul(np.ascontiguousarray(a), np.ascontiguousarray(b))


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Mirror the upper triangle onto the lower one so the result is symmetric to the bit"""
    upper = np.triu(a)
    return upper + np.triu(a, 1).T


def gram(x: np.ndarray) -> np.ndarray:
    """XᵀX with exact symmetry"""
    if x.size == 0:
        raise DimensionMismatchError("gram of an empty matrix")
    a = symmetrize(matmul(x.T, x))
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("Gram matrix has non-finite entries", step=3)
    return a


def frobenius_norm(x: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(x, dtype=np.float64))))


def spectral_norm_estimate(x: np.ndarray, iters: Optional[int] = None, seed: int = 0) -> float:
    """Power-iteration lower bound on σ₁.

    Iterates on XᵀX from a seeded random start and returns √(vᵀXᵀXv) for the
    last unit iterate; the Rayleigh quotient never decreases between iterations.
    """
    if iters is None:
        iters = settings.POWER_ITERATIONS
    if iters < 1:
        raise ValueError("iters must be at least 1")
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(x.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iters):
        xv = x @ v
        estimate = max(estimate, float(np.linalg.norm(xv)))
        w = x.T @ xv
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        v = w / norm
    return max(estimate, float(np.linalg.norm(x @ v)))


def transpose(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.T)


def _round_robin(n: int):
    """Yield rounds of disjoint column pairs covering every pair once per sweep"""
    players = list(range(n)) if n % 2 == 0 else list(range(n)) + [-1]
    m = len(players)
    for _ in range(m - 1):
        p = np.array(players[: m // 2])
        q = np.array(players[m // 2:][::-1])
        keep = (p >= 0) & (q >= 0)
        yield p[keep], q[keep]
        players = [players[0]] + [players[-1]] + players[1:-1]


def jacobi_svd(x: np.ndarray, max_sweeps: Optional[int] = None, tol: Optional[float] = None) -> SvdResult:
    """One-sided (Hestenes) Jacobi SVD in double precision.

    Column pairs are orthogonalised in round-robin order, all pairs of a round at
    once. Converged when |γ| ≤ tol·√(αβ) for every pair of a full sweep.
    """
    if max_sweeps is None:
        max_sweeps = settings.SVD_MAX_SWEEPS
    if tol is None:
        tol = settings.SVD_TOLERANCE
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise OracleError("svd input contains non-finite entries")
    if x.shape[0] < x.shape[1]:
        res = jacobi_svd(x.T, max_sweeps=max_sweeps, tol=tol)
        return SvdResult(u=transpose(res.vt), sigma=res.sigma, vt=transpose(res.u))

    m, n = x.shape
    a = x.copy()
    v = np.eye(n)
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p, q in _round_robin(n):
            if p.size == 0:
                continue
            ap, aq = a[:, p], a[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            rotated = True
            p, q = p[active], q[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            ap, aq = a[:, p], a[:, q]
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            vp, vq = v[:, p], v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        if not rotated:
            logger.debug(f"Jacobi SVD of {m}x{n} converged after {sweep} sweeps")
            break
    else:
        raise ConvergenceError(f"Jacobi SVD did not converge within {max_sweeps} sweeps", sweeps=max_sweeps)

    sigma = np.linalg.norm(a, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, a, v = sigma[order], a[:, order], v[:, order]
    u = np.zeros_like(a)
    nonzero = sigma > 0
    u[:, nonzero] = a[:, nonzero] / sigma[nonzero]
    return SvdResult(u=u, sigma=sigma, vt=transpose(v))


def lapack_svd(x: np.ndarray) -> SvdResult:
    try:
        u, sigma, vt = scipy.linalg.svd(np.asarray(x, dtype=np.float64), full_matrices=False,
                                        lapack_driver="gesvd", check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise OracleError(f"LAPACK SVD failed: {e}")
    return SvdResult(u=u, sigma=sigma, vt=vt)


def svd(x: np.ndarray, method: Optional[str] = None, max_sweeps: Optional[int] = None) -> SvdResult:
    """Thin SVD oracle, always in double precision"""
    method = method or settings.SVD_METHOD
    if method == "auto":
        method = "jacobi" if min(x.shape) <= settings.JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        return jacobi_svd(x, max_sweeps=max_sweeps)
    if method == "lapack":
        return lapack_svd(x)
    raise ValueError(f"unknown SVD method '{method}'")


def numerical_rank(sigma: np.ndarray, shape) -> int:
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    cutoff = max(shape) * np.finfo(np.float64).eps * sigma[0]
    return int(np.sum(sigma > cutoff))


def polar_factor_exact(x: np.ndarray, method: Optional[str] = None) -> PolarFactor:
    """Q = U·Vᵀ from the double-precision SVD of x.

    Rank-deficient inputs get the partial isometry U_r·V_rᵀ over the leading
    numerical-rank singular pairs, flagged in the result. Both SVD methods
    return the same factor.
    """
    res = svd(x, method=method)
    rank = numerical_rank(res.sigma, x.shape)
    q = matmul(res.u[:, :rank], res.vt[:rank])
    deficient = rank < min(x.shape)
    if deficient:
        logger.warning(f"polar factor of rank-deficient {x.shape[0]}x{x.shape[1]} matrix (rank {rank})")
    return PolarFactor(q=q, rank=rank, rank_deficient=deficient)
