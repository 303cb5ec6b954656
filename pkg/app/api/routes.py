from fastapi import APIRouter, HTTPException, status
from fastapi.responses import JSONResponse
from typing import List
from app.core.config import settings
from app.models.schemas import OrthogonalizeRequest, OrthogonalizeResponse, ScheduleInfo
from app.services.linalg_core import as_matrix, polar_factor_exact
from app.services.metrics import polar_error
from app.services.newton_schulz import orthogonalize
from app.services.schedules import available_schedules, builtin_schedule, shipped_schedule_names
import logging
import time

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post("/orthogonalize", response_model=OrthogonalizeResponse)
def run_orthogonalize(request: OrthogonalizeRequest) -> OrthogonalizeResponse:
    """
    Orthogonalize one matrix with the requested pipeline
    """
    start_time = time.time()
    try:
        x0 = as_matrix(request.matrix, "double")
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    rows, cols = x0.shape
    if max(rows, cols) > settings.MAX_MATRIX_SIZE:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"matrix {rows}x{cols} exceeds the size cap of {settings.MAX_MATRIX_SIZE}"
        )

    if request.schedule and request.schedule not in shipped_schedule_names():
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="unknown schedule")

    logger.info(f"Orthogonalizing {rows}x{cols} with {request.pipeline}@{request.iterations}")
    schedule = builtin_schedule(request.schedule) if request.schedule else None
    report = orthogonalize(x0, request.pipeline, schedule, request.iterations, precision=request.precision)

    error = None
    if request.reference:
        error = polar_error(report.result, polar_factor_exact(x0).q)

    processing_time = time.time() - start_time
    logger.info(f"Request processed in {processing_time:.3f} seconds ({report.matmul_count} matmuls)")
    return OrthogonalizeResponse(
        result=report.result.astype(float).tolist(),
        pipeline=report.pipeline,
        preconditioner=report.preconditioner,
        iterations_run=report.iterations_run,
        matmul_count=report.matmul_count,
        schedule_name=report.schedule_name,
        per_iteration=report.per_iteration,
        polar_error=error,
    )


@router.get("/schedules", response_model=List[ScheduleInfo])
def list_schedules() -> List[ScheduleInfo]:
    """Shipped coefficient tables"""
    return [ScheduleInfo(name=s.name, triples=list(s.triples), source=s.source) for s in available_schedules()]


@router.get("/health")
async def health_check():
    """Health check endpoint"""
    try:
        schedules = [s.name for s in available_schedules()]
        return {
            "status": "healthy",
            "timestamp": time.time(),
            "precision": settings.PRECISION,
            "svd_method": settings.SVD_METHOD,
            "schedules": schedules
        }
    except Exception as e:
        logger.error(f"Health check failed: {e}")
        return JSONResponse(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            content={
                "status": "unhealthy",
                "error": str(e),
                "timestamp": time.time()
            }
        )
