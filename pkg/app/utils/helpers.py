import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from dotenv import dotenv_values

from app.core.errors import ConfigError, DimensionMismatchError
from app.models.schemas import RECORD_COLUMNS, BenchRecord

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------- config files

def read_config_file(path, allowed_keys: Sequence[str]) -> Dict[str, str]:
    """Read a KEY=VALUE config file (dotenv grammar, `#` comments)"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    unknown = sorted(k for k in values if k not in allowed_keys and not k.startswith("SCHEDULE_"))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    missing = sorted(k for k, v in values.items() if v is None or v.strip() == "")
    if missing:
        raise ConfigError(f"{path}: keys without a value: {', '.join(missing)}")
    return {k: v.strip() for k, v in values.items()}


def parse_list(value: str) -> List[str]:
    """Split a comma-separated list; `a..b` expands to the integers a through b"""
    items: List[str] = []
    for item in (part.strip() for part in value.split(",")):
        if not item:
            continue
        if ".." in item:
            lo, hi = item.split("..", 1)
            items.extend(str(i) for i in range(int(lo), int(hi) + 1))
        else:
            items.append(item)
    return items


def parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: '{value}'")


# ---------------------------------------------------------------- matrix files

def read_matrix_file(path) -> np.ndarray:
    """Header line `rows cols`, then whitespace-separated row-major decimals"""
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise ConfigError(f"{path}: missing `rows cols` header")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
        values = np.array([float(t) for t in tokens[2:]], dtype=np.float64)
    except ValueError as e:
        raise ConfigError(f"{path}: malformed matrix file: {e}")
    if values.size != rows * cols:
        raise DimensionMismatchError(f"{path}: header says {rows}x{cols}, found {values.size} values")
    return values.reshape(rows, cols)


def write_matrix_file(path, x: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        f.write(f"{x.shape[0]} {x.shape[1]}\n")
        for row in np.asarray(x, dtype=np.float64):
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------- records

def _csv_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RecordWriter:
    """Appends records to a CSV file and its JSON-lines mirror, flushing after every batch"""

    def __init__(self, csv_path):
        self.csv_path = Path(csv_path)
        self.jsonl_path = self.csv_path.with_suffix(".jsonl")
        self.csv_path.parent.mkdir(parents=True, exist_ok=True)
        self._csv = self.csv_path.open("w", newline="")
        self._jsonl = self.jsonl_path.open("w")
        self._writer = csv.writer(self._csv)
        self._writer.writerow(RECORD_COLUMNS)
        self.count = 0

    def write(self, records: Iterable[BenchRecord]) -> None:
        for record in records:
            data = record.model_dump()
            self._writer.writerow([_csv_value(data[c]) for c in RECORD_COLUMNS])
            self._jsonl.write(record.model_dump_json() + "\n")
            self.count += 1
        self._csv.flush()
        self._jsonl.flush()

    def close(self) -> None:
        self._csv.close()
        self._jsonl.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_records_csv(path) -> List[BenchRecord]:
    with Path(path).open(newline="") as f:
        return [BenchRecord(**row) for row in csv.DictReader(f)]


def write_rows_csv(path, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_value(row.get(c)) for c in columns])


def write_json_lines(path, items: Iterable[Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for item in items:
            f.write((item.model_dump_json() if hasattr(item, "model_dump_json") else json.dumps(item)) + "\n")


# ---------------------------------------------------------------- reporting

def log_processing_stats(stats: Dict[str, Any]):
    """Log processing statistics"""
    logger.info("Processing Statistics:")
    for key, value in stats.items():
        logger.info(f"  {key}: {value}")


def format_processing_time(seconds: float) -> str:
    """Format processing time in human-readable format"""
    if seconds < 1:
        return f"{seconds*1000:.0f}ms"
    elif seconds < 60:
        return f"{seconds:.2f}s"
    else:
        minutes = int(seconds // 60)
        remaining_seconds = seconds % 60
        return f"{minutes}m {remaining_seconds:.1f}s"


def format_table(columns: Sequence[str], rows: Sequence[Sequence[str]], header: Optional[str] = None) -> str:
    """Left-aligned plain-text table"""
    widths = [max(len(c), *(len(r[i]) for r in rows)) if rows else len(c) for i, c in enumerate(columns)]
    lines = [header] if header else []
    lines.append("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows)
    return "\n".join(lines)
