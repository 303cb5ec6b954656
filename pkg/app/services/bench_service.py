"""Benchmark sweeps over sizes × distributions × pipelines × iteration counts.

A trial is one sampled matrix; its exact polar factor Q (and Q_aol when the
turbo pipeline is swept) is computed once and every pipeline / iteration count
/ precision is measured against it. Trials run in enumeration order or on a
process pool whose results are consumed in that same order, so output files do
not depend on the number of workers.

The cost axis is matmul_count, not wall time.
"""
import logging
import math
import time
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError

from app.core.config import settings
from app.core.errors import ConfigError, OrthoError
from app.models.schemas import (BenchRecord, CoefficientSchedule, DistributionSpec, SweepConfig,
                                PIPELINES)
from app.services.linalg_core import polar_factor_exact
from app.services.metrics import aol_polar_reference, decompose
from app.services.newton_schulz import PRECONDITIONERS, orthogonalize
from app.services.sampling import derive_seed, sample_one
from app.services.schedules import default_schedule, fit_schedule, resolve_schedule, schedule_from_ref
from app.utils.helpers import (RecordWriter, format_table, log_processing_stats, parse_bool,
                               parse_list, read_config_file, write_rows_csv)

logger = logging.getLogger(__name__)

COST_AXIS_NOTE = "cost axis: matmul_count (logical n^3 products); wall_time is secondary and hardware-dependent"

SWEEP_KEYS = ("SIZES", "DISTRIBUTIONS", "PIPELINES", "ITERATIONS", "BATCH", "SEED", "PRECISION",
              "OUTPUT", "EXTEND_SCHEDULES", "ALLOW_LARGE", "WORKERS")
ERROR_COLUMNS = ("polar_error", "ortho_error", "bias_error", "approx_error")


def load_sweep_config(path) -> SweepConfig:
    values = read_config_file(path, SWEEP_KEYS)
    try:
        fields = {
            "sizes": [int(v) for v in parse_list(values["SIZES"])],
            "batch": int(values.get("BATCH", settings.DEFAULT_BATCH)),
            "workers": int(values.get("WORKERS", settings.BENCH_WORKERS)),
        }
        if "DISTRIBUTIONS" in values:
            fields["distributions"] = [DistributionSpec.parse(v) for v in parse_list(values["DISTRIBUTIONS"])]
        if "PIPELINES" in values:
            fields["pipelines"] = parse_list(values["PIPELINES"])
        if "ITERATIONS" in values:
            fields["iteration_counts"] = [int(v) for v in parse_list(values["ITERATIONS"])]
        if "PRECISION" in values:
            fields["precisions"] = parse_list(values["PRECISION"])
        if "SEED" in values:
            fields["seed"] = int(values["SEED"])
        if "OUTPUT" in values:
            fields["output_path"] = values["OUTPUT"]
        if "EXTEND_SCHEDULES" in values:
            fields["extend_schedules"] = parse_bool(values["EXTEND_SCHEDULES"])
        if "ALLOW_LARGE" in values:
            fields["allow_large"] = parse_bool(values["ALLOW_LARGE"])
        fields["schedule_files"] = {
            key[len("SCHEDULE_"):].lower(): value for key, value in values.items() if key.startswith("SCHEDULE_")
        }
        return SweepConfig(**fields)
    except KeyError as e:
        raise ConfigError(f"{path}: missing required key {e}")
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"{path}: {e}")


def sweep_schedules(config: SweepConfig) -> Dict[str, CoefficientSchedule]:
    """Base schedule per swept pipeline, validated against every iteration count"""
    unknown = set(config.schedule_files) - set(PIPELINES)
    if unknown:
        raise ConfigError(f"schedule given for unknown pipeline(s): {', '.join(sorted(unknown))}")
    schedules = {}
    for pipeline in config.pipelines:
        ref = config.schedule_files.get(pipeline)
        schedule = schedule_from_ref(ref) if ref else default_schedule(pipeline)
        for iterations in config.iteration_counts:
            resolve_schedule(fit_schedule(schedule, iterations, config.extend_schedules), iterations)
        schedules[pipeline] = schedule
    return schedules


def validate_sizes(config: SweepConfig) -> None:
    oversize = [s for s in config.sizes if s > settings.MAX_MATRIX_SIZE]
    if not oversize:
        return
    if not config.allow_large:
        raise ConfigError(f"sizes {oversize} exceed the cap of {settings.MAX_MATRIX_SIZE}; set ALLOW_LARGE=true")
    logger.warning(f"sizes {oversize} exceed {settings.MAX_MATRIX_SIZE}; the SVD oracle will be slow")


class Trial(BaseModel):
    size: int
    distribution: DistributionSpec
    distribution_index: int
    trial_index: int
    seed: int


def enumerate_trials(config: SweepConfig) -> Iterator[Trial]:
    for size in config.sizes:
        for d_index, dist in enumerate(config.distributions):
            seed = derive_seed(config.seed, size, d_index)
            for trial_index in range(config.batch):
                yield Trial(size=size, distribution=dist, distribution_index=d_index,
                            trial_index=trial_index, seed=seed)


def _record(trial: Trial, pipeline: str, iterations: int, precision: str, schedule_name: str,
            **fields) -> BenchRecord:
    return BenchRecord(
        pipeline=pipeline,
        size=trial.size,
        distribution=trial.distribution.name,
        alpha=trial.distribution.alpha_or_none,
        iterations=iterations,
        trial_index=trial.trial_index,
        precision=precision,
        schedule_name=schedule_name,
        seed=trial.seed,
        **fields,
    )


def run_trial(config: SweepConfig, schedules: Dict[str, CoefficientSchedule], trial: Trial) -> List[BenchRecord]:
    """All (precision, pipeline, iteration count) records of one sampled matrix"""
    spec = trial.distribution.to_sample_spec(trial.size, trial.size, trial.seed, config.batch)
    combos = [(p, pipe, it) for p in config.precisions for pipe in config.pipelines for it in config.iteration_counts]
    try:
        x0 = sample_one(spec, trial.trial_index)
        q = polar_factor_exact(x0).q
        q_aol = aol_polar_reference(x0) if "turbo" in config.pipelines else None
    except OrthoError as e:
        logger.error(f"trial {trial.size}/{trial.distribution.name}/{trial.trial_index}: oracle failed: {e}")
        return [_record(trial, pipe, it, prec, fit_schedule(schedules[pipe], it, config.extend_schedules).name,
                        matmul_count=0, wall_time=0.0,
                        status="failed", message=f"oracle: {e}") for prec, pipe, it in combos]

    records = []
    for precision, pipeline, iterations in combos:
        schedule = fit_schedule(schedules[pipeline], iterations, config.extend_schedules)
        try:
            report = orthogonalize(x0, pipeline, schedule, iterations, precision=precision, track_errors=False)
            reference = q_aol if PRECONDITIONERS[pipeline] == "aol" else q
            breakdown = decompose(x0, report.result, reference, reference_q=q)
        except OrthoError as e:
            logger.error(f"{pipeline}@{iterations} on trial {trial.trial_index} (size {trial.size}) failed: {e}")
            records.append(_record(trial, pipeline, iterations, precision, schedule.name, matmul_count=0,
                                   wall_time=0.0, status="failed", message=str(e)))
            continue
        records.append(_record(
            trial, pipeline, iterations, precision, schedule.name,
            polar_error=breakdown.polar_error,
            ortho_error=breakdown.ortho_error,
            bias_error=breakdown.bias_error,
            approx_error=breakdown.approx_error,
            matmul_count=report.matmul_count,
            wall_time=report.wall_time,
        ))
    return records


def _run_trial_task(args) -> List[BenchRecord]:
    return run_trial(*args)


def run_sweep(config: SweepConfig, output_path: Optional[str] = None) -> List[BenchRecord]:
    """Execute the full Cartesian sweep, appending records to disk as trials finish"""
    validate_sizes(config)
    schedules = sweep_schedules(config)
    output_path = output_path or config.output_path
    tasks = [(config, schedules, trial) for trial in enumerate_trials(config)]
    logger.info(f"Sweep: {len(tasks)} trials, pipelines {config.pipelines}, iterations {config.iteration_counts}, "
                f"precisions {config.precisions} -> {output_path}")
    started = time.time()
    records: List[BenchRecord] = []
    with RecordWriter(output_path) as writer:
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                for batch in pool.map(_run_trial_task, tasks):
                    writer.write(batch)
                    records.extend(batch)
        else:
            for task in tasks:
                batch = _run_trial_task(task)
                writer.write(batch)
                records.extend(batch)

    failures = [r for r in records if r.failed]
    log_processing_stats({
        "records": len(records),
        "failures": len(failures),
        "elapsed_seconds": round(time.time() - started, 2),
        "output": output_path,
    })
    for failure in failures:
        logger.warning(f"failed: {failure.pipeline}@{failure.iterations} size {failure.size} "
                       f"{failure.distribution} trial {failure.trial_index}: {failure.message}")
    return records


# ---------------------------------------------------------------- summaries

GroupKey = Tuple[str, int, str, Optional[float], int, str]


class SummaryRow(BaseModel):
    pipeline: str
    size: int
    distribution: str
    alpha: Optional[float] = None
    iterations: int
    precision: str
    count: int
    failures: int
    polar_error_mean: Optional[float] = None
    polar_error_std: Optional[float] = None
    ortho_error_mean: Optional[float] = None
    ortho_error_std: Optional[float] = None
    bias_error_mean: Optional[float] = None
    bias_error_std: Optional[float] = None
    approx_error_mean: Optional[float] = None
    approx_error_std: Optional[float] = None
    matmul_count_mean: Optional[float] = None
    wall_time_mean: Optional[float] = None


SUMMARY_COLUMNS = tuple(SummaryRow.model_fields.keys())


def _group_key(r: BenchRecord) -> GroupKey:
    return (r.pipeline, r.size, r.distribution, r.alpha, r.iterations, r.precision)


def group_records(records: Sequence[BenchRecord]) -> "OrderedDict[GroupKey, List[BenchRecord]]":
    groups: "OrderedDict[GroupKey, List[BenchRecord]]" = OrderedDict()
    for r in records:
        groups.setdefault(_group_key(r), []).append(r)
    return groups


def _mean_std(values: List[float]) -> Tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0))


def summarize(records: Sequence[BenchRecord]) -> List[SummaryRow]:
    """Mean ± population std of every error column per (pipeline, size, distribution, iterations)"""
    if not records:
        raise ValueError("nothing to summarize")
    rows = []
    for (pipeline, size, dist, alpha, iterations, precision), group in group_records(records).items():
        ok = [r for r in group if not r.failed]
        stats = {}
        for column in ERROR_COLUMNS:
            stats[f"{column}_mean"], stats[f"{column}_std"] = _mean_std(
                [getattr(r, column) for r in ok if getattr(r, column) is not None])
        stats["matmul_count_mean"] = _mean_std([float(r.matmul_count) for r in ok])[0]
        stats["wall_time_mean"] = _mean_std([r.wall_time for r in ok])[0]
        rows.append(SummaryRow(pipeline=pipeline, size=size, distribution=dist, alpha=alpha,
                               iterations=iterations, precision=precision, count=len(ok),
                               failures=len(group) - len(ok), **stats))
    return rows


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4g}"


def format_summary(rows: Sequence[SummaryRow]) -> str:
    columns = ("pipeline", "size", "distribution", "iters", "prec", "n", "fail",
               "polar_error", "ortho_error", "bias_error", "approx_error", "matmuls", "wall_time")
    table = []
    for r in rows:
        dist = r.distribution if r.alpha is None else f"{r.distribution}({r.alpha:g})"
        table.append([r.pipeline, str(r.size), dist, str(r.iterations), r.precision, str(r.count), str(r.failures)]
                     + [f"{_fmt(getattr(r, c + '_mean'))} ± {_fmt(getattr(r, c + '_std'))}" for c in ERROR_COLUMNS]
                     + [_fmt(r.matmul_count_mean), _fmt(r.wall_time_mean)])
    return format_table(columns, table, header=f"# {COST_AXIS_NOTE}")


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    write_rows_csv(path, SUMMARY_COLUMNS, (r.model_dump() for r in rows))


# ---------------------------------------------------------------- pareto

class ParetoPoint(BaseModel):
    pipeline: str
    size: int
    distribution: str
    alpha: Optional[float] = None
    precision: str
    iterations: int
    matmul_count: float
    polar_error: float
    wall_time: float


PARETO_COLUMNS = tuple(ParetoPoint.model_fields.keys())


def pareto_export(records: Sequence[BenchRecord], path=None) -> List[ParetoPoint]:
    """Per-pipeline (matmul_count, mean polar_error) frontier for every size / distribution.

    A point stays on its pipeline's frontier when no cheaper point of the same
    pipeline reaches an equal or lower error.
    """
    if len({r.pipeline for r in records}) < 2:
        logger.warning("pareto export with fewer than two pipelines")
    points = []
    for (pipeline, size, dist, alpha, iterations, precision), group in group_records(records).items():
        ok = [r for r in group if not r.failed and r.polar_error is not None]
        if not ok:
            continue
        points.append(ParetoPoint(
            pipeline=pipeline, size=size, distribution=dist, alpha=alpha, precision=precision,
            iterations=iterations,
            matmul_count=float(np.mean([r.matmul_count for r in ok])),
            polar_error=float(np.mean([r.polar_error for r in ok])),
            wall_time=float(np.mean([r.wall_time for r in ok])),
        ))
    points.sort(key=lambda p: (p.size, p.distribution, p.alpha or 0.0, p.precision, p.pipeline,
                               p.matmul_count, p.polar_error))
    frontier = []
    best: Dict[tuple, float] = {}
    for p in points:
        key = (p.size, p.distribution, p.alpha, p.precision, p.pipeline)
        if p.polar_error < best.get(key, math.inf):
            frontier.append(p)
            best[key] = p.polar_error
    if path is not None:
        write_rows_csv(path, PARETO_COLUMNS, (p.model_dump() for p in frontier))
        logger.info(f"Wrote {len(frontier)} frontier points to {path} ({COST_AXIS_NOTE})")
    return frontier
