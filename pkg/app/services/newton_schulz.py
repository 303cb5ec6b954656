"""Newton-Schulz orthogonalization engine.

Each quintic step is computed as

    A = XᵀX              (step 3, skipped when a Gram is handed in)
    B = b·A + c·A·A      (step 4)
    X' = a·X + X·B       (step 5)

and maps every singular value through p(σ) = aσ + bσ³ + cσ⁵ while keeping the
singular vectors. Pipelines:

    muon       Frobenius scaling, constant triple
    muon_plus  Frobenius scaling, per-iteration triples
    turbo      AOL scaling, its Gram reused by the first step
"""
import logging
import time
from typing import List, Optional, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import NonFiniteError, OrthoError
from app.models.schemas import CoefficientSchedule, IterationStat, OrthogonalizeReport
from app.services.linalg_core import as_matrix, gram, matmul, precision_of, transpose
from app.services.metrics import ortho_error
from app.services.precondition import orient, precondition
from app.services.schedules import fit_schedule, resolve_schedule, schedule_for

logger = logging.getLogger(__name__)

PRECONDITIONERS = {"muon": "frobenius", "muon_plus": "frobenius", "turbo": "aol"}


def _check_finite(m: np.ndarray, step: int, iteration: Optional[int] = None) -> None:
    if not np.all(np.isfinite(m)):
        where = f" at iteration {iteration}" if iteration is not None else ""
        raise NonFiniteError(f"non-finite values in step {step}{where}", step=step, iteration=iteration)


def bjorck_step(x: np.ndarray, beta: float, gram_in: Optional[np.ndarray] = None) -> np.ndarray:
    """One cubic step X' = (1+β)X − βX(XᵀX).

    Contracts singular values toward 1 (p(1) = 1) for ‖X‖₂ ≤ 1 and β ∈ [0, 0.5].
    """
    if not 0.0 <= beta <= 0.5:
        raise ValueError(f"beta must lie in [0, 0.5], got {beta}")
    a = gram_in if gram_in is not None else gram(x)
    dt = x.dtype.type
    out = dt(1.0 + beta) * x - dt(beta) * matmul(x, a)
    _check_finite(out, step=5)
    return out


def ns_step(x: np.ndarray, gram_in: Optional[np.ndarray], a: float, b: float, c: float,
            iteration: Optional[int] = None) -> Tuple[np.ndarray, int]:
    """One quintic step; returns (x_next, matmuls_used)"""
    matmuls = 0
    if gram_in is None:
        gram_in = gram(x)
        matmuls += 1
    _check_finite(gram_in, step=3, iteration=iteration)
    dt = x.dtype.type
    bm = dt(b) * gram_in + dt(c) * matmul(gram_in, gram_in)
    matmuls += 1
    _check_finite(bm, step=4, iteration=iteration)
    x_next = dt(a) * x + matmul(x, bm)
    matmuls += 1
    _check_finite(x_next, step=5, iteration=iteration)
    return x_next, matmuls


def orthogonalize(x0: np.ndarray, pipeline: str, schedule: Optional[CoefficientSchedule] = None,
                  iterations: int = 5, precision: Optional[str] = None,
                  reuse_gram: bool = True, track_errors: Optional[bool] = None) -> OrthogonalizeReport:
    """Run one of the muon / muon_plus / turbo pipelines on x0.

    Wide inputs are transposed so the Gram is formed on the short side and the
    result is transposed back. `reuse_gram=False` recomputes the first Gram of
    the turbo pipeline instead of rescaling the cached one.
    """
    if pipeline not in PRECONDITIONERS:
        raise ValueError(f"unknown pipeline '{pipeline}'")
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    track_errors = settings.TRACK_ITERATION_ERRORS if track_errors is None else track_errors
    schedule = fit_schedule(schedule, iterations) if schedule is not None else schedule_for(pipeline, iterations)
    triples = resolve_schedule(schedule, iterations)
    if pipeline == "muon" and len(set(triples)) > 1:
        logger.warning(f"muon pipeline given a varying schedule '{schedule.name}'")

    x = as_matrix(x0, precision)
    x, transposed = orient(x)
    kind = PRECONDITIONERS[pipeline]

    started = time.perf_counter()
    try:
        pre = precondition(x, kind)
    except OrthoError as e:
        logger.error(f"{pipeline}: preconditioning failed: {e}")
        raise
    x = pre.x1
    gram_in = pre.gram1 if (kind == "aol" and reuse_gram) else None
    carried = 1 if kind == "aol" else 0
    stats: List[IterationStat] = []
    total = 0
    for k, (a, b, c) in enumerate(triples, start=1):
        x, used = ns_step(x, gram_in, a, b, c, iteration=k)
        used += carried
        carried = 0
        gram_in = None
        total += used
        now = time.perf_counter()
        err = ortho_error(x) if track_errors else None
        stats.append(IterationStat(iteration=k, a=a, b=b, c=c, matmuls=used, ortho_error=err,
                                   elapsed=now - started))
        logger.debug(f"{pipeline} iteration {k}: ({a}, {b}, {c}) ortho_error={err}")
        started = time.perf_counter()

    result = transpose(x) if transposed else x
    return OrthogonalizeReport(
        result=result,
        pipeline=pipeline,
        preconditioner=kind,
        iterations_run=len(triples),
        matmul_count=total,
        per_iteration=stats,
        precision=precision_of(result),
        schedule_name=schedule.name,
        schedule_source=schedule.source,
        transposed=transposed,
    )


def bjorck_orthogonalize(x0: np.ndarray, beta: float = 0.5, iterations: int = 10,
                         preconditioner: str = "frobenius", precision: Optional[str] = None,
                         track_errors: Optional[bool] = None) -> OrthogonalizeReport:
    """Cubic Björck iteration behind either preconditioner (two matmuls per step)"""
    track_errors = settings.TRACK_ITERATION_ERRORS if track_errors is None else track_errors
    x, transposed = orient(as_matrix(x0, precision))
    started = time.perf_counter()
    pre = precondition(x, preconditioner)
    x, gram_in = pre.x1, pre.gram1
    carried = 1 if gram_in is not None else 0
    stats: List[IterationStat] = []
    total = 0
    for k in range(1, iterations + 1):
        used = carried + (1 if gram_in is None else 0) + 1
        x = bjorck_step(x, beta, gram_in=gram_in)
        carried, gram_in = 0, None
        total += used
        now = time.perf_counter()
        err = ortho_error(x) if track_errors else None
        stats.append(IterationStat(iteration=k, a=1.0 + beta, b=-beta, c=0.0, matmuls=used,
                                   ortho_error=err, elapsed=now - started))
        started = time.perf_counter()
    result = transpose(x) if transposed else x
    return OrthogonalizeReport(
        result=result,
        pipeline="bjorck",
        preconditioner=preconditioner,
        iterations_run=iterations,
        matmul_count=total,
        per_iteration=stats,
        precision=precision_of(result),
        schedule_name=f"bjorck(beta={beta:g})",
        transposed=transposed,
    )
