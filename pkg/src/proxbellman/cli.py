"""
Command line entry point: `python -m proxbellman <command>`

    gen-data  --n --seed --out                 write a Bid-Click dataset (JSON Lines)
    train     --config --out                   every agent x seed on the full dataset
    sweep     --config --out                   the same over every sub-sample fraction
    report    --in --format {markdown,csv}     tables and plot data from a run directory
    verify    --suite {props,oracle,grad}      randomized operator / gradient checks

Exit codes: 0 success, 1 validation error (or failed verification), 2 training abort.
"""

import argparse
import logging
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from .bidclick_env import dataset_hash, generate_dataset, save_dataset
from .errors import ConfigError, DomainError, ReportError
from .orchestrator import ExperimentConfig, run_experiment, subsample_sweep
from .report import emit_report, read_records
from .settings import RuntimeSettings
from .trace import TrainingTrace
from .verification import SUITES, run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ABORTED = 2


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="proxbellman",
                                     description="Constraint-aware offline RL on the Bid-Click benchmark")
    parser.add_argument("--log-level", default=None, help="overrides PROXBELLMAN_LOG_LEVEL")
    parser.add_argument("--workers", type=int, default=None, help="overrides PROXBELLMAN_WORKERS")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a logged dataset")
    gen.add_argument("--n", type=int, default=100_000)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)

    for name, text in (("train", "run every configured cell on the full dataset"),
                       ("sweep", "run every configured cell on each sub-sample fraction")):
        run = sub.add_parser(name, help=text)
        run.add_argument("--config", type=Path, required=True)
        run.add_argument("--out", type=Path, default=None, help="overrides the config's output_dir")

    rep = sub.add_parser("report", help="emit tables and plot data from a run directory")
    rep.add_argument("--in", dest="in_dir", type=Path, required=True)
    rep.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    rep.add_argument("--out", type=Path, default=None, help="defaults to <in>/report")

    ver = sub.add_parser("verify", help="run a randomized verification suite")
    ver.add_argument("--suite", choices=sorted(SUITES), required=True)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--scale", type=float, default=1.0, help="shrinks (< 1) or grows sample counts")
    return parser.parse_args(argv)


def _gen_data(args: argparse.Namespace, settings: RuntimeSettings) -> int:
    data = generate_dataset(args.n, args.seed)
    path = save_dataset(data, args.out)
    logger.info(f"[DATA] {len(data)} transitions (seed {args.seed}) -> {path}, hash {dataset_hash(data)[:12]}")
    return EXIT_OK


def _run(args: argparse.Namespace, settings: RuntimeSettings) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    out = args.out
    if out is None:
        out = Path(cfg.output_dir) if "output_dir" in cfg.model_fields_set else settings.output_dir
    runner = run_experiment if args.command == "train" else subsample_sweep
    records = runner(cfg, settings.workers, out)
    failed = [r for r in records if not r.ok]
    if failed:
        logger.error(f"[SWEEP] {len(failed)}/{len(records)} cell(s) aborted: "
                     + ", ".join(r.cell for r in failed))
        return EXIT_ABORTED
    logger.info(f"[SWEEP] {len(records)} record(s) written to {out}")
    return EXIT_OK


def _report(args: argparse.Namespace, settings: RuntimeSettings) -> int:
    records = read_records(args.in_dir / "records.jsonl")
    traces = {path.stem: TrainingTrace.from_csv(path)
              for path in sorted((args.in_dir / "traces").glob("*.csv"))}
    emit_report(records, args.format, args.out or args.in_dir / "report", traces)
    return EXIT_OK


def _verify(args: argparse.Namespace, settings: RuntimeSettings) -> int:
    report = run_suite(args.suite, seed=args.seed, scale=args.scale)
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_INVALID


COMMANDS = {
    "gen-data": _gen_data,
    "train": _run,
    "sweep": _run,
    "report": _report,
    "verify": _verify,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    settings = RuntimeSettings.from_env()
    if args.workers is not None:
        settings.workers = max(1, args.workers)
    level = (args.log_level or settings.log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        return COMMANDS[args.command](args, settings)
    except (ValidationError, ConfigError, DomainError, ReportError) as exc:
        logger.error(f"[CLI] {args.command}: {exc}")
        return EXIT_INVALID
    except FileNotFoundError as exc:
        logger.error(f"[CLI] {args.command}: {exc}")
        return EXIT_INVALID
