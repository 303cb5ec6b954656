"""Command-line surface.

    python -m app.cli bench sweep --config configs/iteration_removal.env
    python -m app.cli bench summarize results/sweep.csv [--out summary.csv]
    python -m app.cli bench pareto results/sweep.csv [--out pareto.csv]
    python -m app.cli train --config configs/train.env
    python -m app.cli orthogonalize --pipeline turbo --iters 4 --in x.txt --out q.txt

Exit codes: 0 success, 1 config error, 2 trial failures present, 3 oracle failure.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import (EXIT_OK, EXIT_TRIAL_FAILURES, ConfigError, OrthoError, exit_code_for)
from app.models.schemas import PIPELINES, TrainerConfig
from app.services.bench_service import (format_summary, load_sweep_config, pareto_export, run_sweep,
                                        summarize, write_summary_csv)
from app.services.linalg_core import polar_factor_exact
from app.services.metrics import ortho_error, polar_error
from app.services.newton_schulz import orthogonalize
from app.services.schedules import schedule_from_ref
from app.services.toy_trainer import train
from app.utils.helpers import (format_processing_time, parse_list, read_config_file, read_matrix_file,
                               read_records_csv, write_json_lines, write_matrix_file)

logger = logging.getLogger(__name__)

TRAIN_KEYS = ("LAYER_DIMS", "LEARNING_RATE", "MOMENTUM", "STEPS", "NS_ITERATIONS", "PIPELINE", "SCHEDULE",
              "SEEDS", "DATASET", "SAMPLES", "SEPARATION", "BATCH_SIZE", "PRECISION", "LOG_EVERY",
              "DECOMPOSE_EVERY", "OUTPUT")


def load_trainer_configs(path) -> Tuple[List[TrainerConfig], Optional[str]]:
    """One TrainerConfig per seed listed under SEEDS, plus the OUTPUT path if any"""
    values = read_config_file(path, TRAIN_KEYS)
    fields = {}
    try:
        if "LAYER_DIMS" in values:
            fields["layer_dims"] = [int(v) for v in parse_list(values["LAYER_DIMS"])]
        for key, name, cast in (("LEARNING_RATE", "learning_rate", float), ("MOMENTUM", "momentum", float),
                                ("STEPS", "steps", int), ("NS_ITERATIONS", "ns_iterations", int),
                                ("PIPELINE", "pipeline", str), ("SCHEDULE", "schedule", str),
                                ("DATASET", "dataset", str), ("SAMPLES", "samples", int),
                                ("SEPARATION", "separation", float), ("BATCH_SIZE", "batch_size", int),
                                ("PRECISION", "precision", str), ("LOG_EVERY", "log_every", int),
                                ("DECOMPOSE_EVERY", "decompose_every", int)):
            if key in values:
                fields[name] = cast(values[key])
        seeds = [int(s) for s in parse_list(values.get("SEEDS", "0"))]
        return [TrainerConfig(seed=seed, **fields) for seed in seeds], values.get("OUTPUT")
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"{path}: {e}")


def cmd_sweep(args) -> int:
    config = load_sweep_config(args.config)
    if args.output:
        config = config.model_copy(update={"output_path": args.output})
    records = run_sweep(config)
    rows = summarize(records)
    print(format_summary(rows))
    return EXIT_TRIAL_FAILURES if any(r.failed for r in records) else EXIT_OK


def cmd_summarize(args) -> int:
    records = read_records_csv(args.csv)
    rows = summarize(records)
    print(format_summary(rows))
    if args.out:
        write_summary_csv(rows, args.out)
    return EXIT_TRIAL_FAILURES if any(r.failed for r in records) else EXIT_OK


def cmd_pareto(args) -> int:
    records = read_records_csv(args.csv)
    out = args.out or str(Path(args.csv).with_name(Path(args.csv).stem + "_pareto.csv"))
    points = pareto_export(records, out)
    print(f"{len(points)} frontier points written to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    configs, output = load_trainer_configs(args.config)
    output = args.output or output
    reports = [train(config) for config in configs]
    for report in reports:
        print(f"{report.pipeline}@{report.iterations} seed {report.seed}: loss {report.loss_curve[0]:.4f} -> "
              f"{report.final_loss:.4f}, val accuracy {report.final_accuracy:.4f}")
        if report.momentum_errors:
            last = report.momentum_errors[-1].step
            for stat in (s for s in report.momentum_errors if s.step == last):
                print(f"  step {last} {stat.layer}: bias {stat.bias_error:.3e}, approx {stat.approx_error:.3e}")
    if output:
        write_json_lines(output, reports)
    return EXIT_OK


def cmd_orthogonalize(args) -> int:
    x0 = read_matrix_file(args.input)
    schedule = schedule_from_ref(args.schedule) if args.schedule else None
    report = orthogonalize(x0, args.pipeline, schedule, args.iters, precision=args.precision)
    write_matrix_file(args.out, report.result)
    print(f"{report.pipeline}@{report.iterations_run} ({report.schedule_name}): {report.matmul_count} matmuls, "
          f"ortho_error {ortho_error(report.result):.3e}, {format_processing_time(report.wall_time)}")
    if args.reference:
        q = polar_factor_exact(x0).q
        print(f"polar_error {polar_error(report.result, q):.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.cli", description="AOL-preconditioned Newton-Schulz toolkit")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="benchmark sweeps").add_subparsers(dest="bench_command", required=True)
    sweep = bench.add_parser("sweep", help="run a sweep from a config file")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--output", help="override OUTPUT from the config")
    sweep.set_defaults(func=cmd_sweep)
    summ = bench.add_parser("summarize", help="mean ± std per group of a results CSV")
    summ.add_argument("csv")
    summ.add_argument("--out", help="also write the summary as CSV")
    summ.set_defaults(func=cmd_summarize)
    pareto = bench.add_parser("pareto", help="export the cost/error frontier of a results CSV")
    pareto.add_argument("csv")
    pareto.add_argument("--out")
    pareto.set_defaults(func=cmd_pareto)

    tr = sub.add_parser("train", help="train the toy classifier")
    tr.add_argument("--config", required=True)
    tr.add_argument("--output", help="JSON-lines file for the train reports")
    tr.set_defaults(func=cmd_train)

    ortho = sub.add_parser("orthogonalize", help="orthogonalize a matrix file")
    ortho.add_argument("--pipeline", choices=PIPELINES, default="turbo")
    ortho.add_argument("--iters", type=int, default=4)
    ortho.add_argument("--schedule", help="shipped schedule name or path to a schedule file")
    ortho.add_argument("--precision", choices=("single", "double"), default=None)
    ortho.add_argument("--in", dest="input", required=True)
    ortho.add_argument("--out", required=True)
    ortho.add_argument("--reference", action="store_true", help="also report the polar error against the SVD")
    ortho.set_defaults(func=cmd_orthogonalize)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    try:
        return args.func(args)
    except OrthoError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return exit_code_for(e)
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"Configuration error: {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
