"""Coefficient schedules for the quintic iteration p(σ) = aσ + bσ³ + cσ⁵.

Tables live in plain-text files (one ``a b c`` triple per line, ``#`` comments)
under ``settings.SCHEDULES_DIR``; none are hardcoded here.
"""
import logging
import math
import re
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import ScheduleError
from app.models.schemas import CoefficientSchedule

logger = logging.getLogger(__name__)

Triple = Tuple[float, float, float]

SHIPPED_NAME = re.compile(r"^[A-Za-z0-9_]+$")


def parse_schedule(text: str, name: str, source: Optional[str] = None) -> CoefficientSchedule:
    triples: List[Triple] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ScheduleError(f"{name}: line {line_no}: expected 3 coefficients, got {len(fields)}", line=line_no)
        try:
            triple = tuple(float(f) for f in fields)
        except ValueError:
            raise ScheduleError(f"{name}: line {line_no}: not a decimal triple: '{line}'", line=line_no)
        if not all(math.isfinite(c) for c in triple):
            raise ScheduleError(f"{name}: line {line_no}: non-finite coefficient", line=line_no)
        triples.append(triple)
    if not triples:
        raise ScheduleError(f"{name}: empty coefficient table")
    return CoefficientSchedule(name=name, triples=tuple(triples), source=source)


def load_schedule(source) -> CoefficientSchedule:
    """Load a schedule file; the file stem becomes the schedule name"""
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScheduleError(f"cannot read schedule file {path}: {e}")
    schedule = parse_schedule(text, name=path.stem, source=str(path))
    logger.debug(f"Loaded schedule '{schedule.name}' with {len(schedule)} triples from {path}")
    return schedule


def builtin_schedule(name: str) -> CoefficientSchedule:
    """A shipped table by name, e.g. ``muon``, ``muon_plus`` or ``polar_express``"""
    if not SHIPPED_NAME.match(name) or name not in shipped_schedule_names():
        raise ScheduleError(f"unknown schedule '{name}'")
    return load_schedule(Path(settings.SCHEDULES_DIR) / f"{name}.txt")


def schedule_from_ref(ref: str) -> CoefficientSchedule:
    """A schedule file path (`*.txt` or containing a slash) or a shipped table name"""
    if ref.endswith(".txt") or "/" in ref:
        return load_schedule(ref)
    return builtin_schedule(ref)


def shipped_schedule_names() -> List[str]:
    return sorted(path.stem for path in Path(settings.SCHEDULES_DIR).glob("*.txt"))


def available_schedules() -> List[CoefficientSchedule]:
    return [load_schedule(path) for path in sorted(Path(settings.SCHEDULES_DIR).glob("*.txt"))]


def truncate_schedule(schedule: CoefficientSchedule, keep_last: int) -> CoefficientSchedule:
    """Keep only the final `keep_last` triples"""
    if not 1 <= keep_last <= len(schedule):
        raise ScheduleError(f"keep_last must lie in [1, {len(schedule)}], got {keep_last}")
    if keep_last == len(schedule):
        return schedule
    return CoefficientSchedule(
        name=f"{schedule.name}[-{keep_last}:]",
        triples=schedule.triples[-keep_last:],
        source=schedule.source,
    )


def extend_schedule(schedule: CoefficientSchedule, total: int,
                    polish: Optional[Sequence[float]] = None) -> CoefficientSchedule:
    """Pad a schedule to `total` triples with a polishing triple (p(1) = 1, p'(1) = 0)"""
    if total <= len(schedule):
        return schedule
    polish = tuple(polish or settings.POLISH_TRIPLE)
    extra = total - len(schedule)
    return CoefficientSchedule(
        name=f"{schedule.name}+polish{extra}",
        triples=schedule.triples + (polish,) * extra,
        source=schedule.source,
    )


def resolve_schedule(schedule: CoefficientSchedule, iterations: int) -> List[Triple]:
    """The triples applied for `iterations` steps.

    A single triple repeats; longer tables keep their last `iterations` triples.
    """
    if iterations < 1:
        raise ScheduleError(f"iterations must be at least 1, got {iterations}")
    if len(schedule) == 1:
        return [schedule.triples[0]] * iterations
    if len(schedule) < iterations:
        raise ScheduleError(
            f"schedule '{schedule.name}' has {len(schedule)} triples, {iterations} iterations requested"
        )
    return list(truncate_schedule(schedule, iterations).triples)


def fit_schedule(schedule: CoefficientSchedule, iterations: int, extend: bool = False) -> CoefficientSchedule:
    """The schedule actually run for `iterations` steps: extended with polishing
    triples when `extend` is set and the table is too short, truncated to its
    last triples when too long. Single-triple schedules are returned as is.
    """
    if len(schedule) == 1:
        return schedule
    if extend:
        schedule = extend_schedule(schedule, iterations)
    if len(schedule) > iterations:
        schedule = truncate_schedule(schedule, iterations)
    return schedule


def default_schedule(pipeline: str) -> CoefficientSchedule:
    """The shipped table a pipeline runs by default; turbo inherits the Muon+ table"""
    names = {
        "muon": settings.DEFAULT_SCHEDULE_MUON,
        "muon_plus": settings.DEFAULT_SCHEDULE_MUON_PLUS,
        "turbo": settings.DEFAULT_SCHEDULE_TURBO,
    }
    if pipeline not in names:
        raise ScheduleError(f"unknown pipeline '{pipeline}'")
    return builtin_schedule(names[pipeline])


def schedule_for(pipeline: str, iterations: int, extend: bool = False) -> CoefficientSchedule:
    """Default schedule of a pipeline fitted to `iterations`"""
    return fit_schedule(default_schedule(pipeline), iterations, extend=extend)


def scalar_polynomial(sigma, a: float, b: float, c: float):
    """p(σ) = aσ + bσ³ + cσ⁵"""
    sigma = np.asarray(sigma, dtype=np.float64)
    sq = sigma * sigma
    return sigma * (a + sq * (b + c * sq))


def spectral_recursion(sigmas, triples: Iterable[Triple]) -> np.ndarray:
    """Apply the quintic maps of `triples` in order to every singular value"""
    out = np.asarray(sigmas, dtype=np.float64)
    for a, b, c in triples:
        out = scalar_polynomial(out, a, b, c)
    return out
