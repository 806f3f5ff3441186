import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from app.database import DatabaseError, list_experiments, load_records, store_records
from app.environments import EnvironmentConstructionError
from app.evaluation import summarize_records
from app.harness import APPENDIX_GRIDS, ExperimentError, build_environment, run_experiment, sweep_grid
from app.logger import setup_logging
from app.models import EnvironmentDocument, ExperimentSpec
from app.oracle import DEFAULT_ENUMERATION_CAP, OracleCapExceededError, brute_force_optimal_joint
from app.report import ReportError, emit_report, load_csv_records, load_json_report

# Load environment variables from .env file
load_dotenv()

# Set up logging
logger = setup_logging()

CLI_ERRORS = (
    ValidationError,
    ExperimentError,
    OracleCapExceededError,
    EnvironmentConstructionError,
    ReportError,
    DatabaseError,
    OSError,
    ValueError,
)


def parse_seeds(text: str) -> List[int]:
    """Comma-separated seeds and inclusive ranges, e.g. "0-9,20,31"."""
    seeds: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            low, high = part.split("-", 1)
            seeds.extend(range(int(low), int(high) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError(f"No seeds in {text!r}")
    return seeds


def resolve_output_dir(cli_out: Optional[str], spec: Optional[ExperimentSpec] = None) -> Path:
    """--out, then CBMCTS_OUTPUT_DIR, then the experiment document's output_dir, then ./results."""
    chosen = cli_out or os.getenv("CBMCTS_OUTPUT_DIR") or (spec.output_dir if spec else None) or "results"
    return Path(chosen)


def load_spec(path: str, seeds: Optional[List[int]]) -> ExperimentSpec:
    spec = ExperimentSpec.model_validate_json(Path(path).read_text())
    if seeds:
        spec = spec.model_copy(update={"seeds": seeds})
    return spec


def command_run(args) -> None:
    spec = load_spec(args.spec, args.seeds)
    out = resolve_output_dir(args.out, spec)
    result = run_experiment(spec, jobs=args.jobs)
    store_records(str(out / "records.db"), spec.name, result.records)
    emit_report(result.records, args.format, out / f"{spec.name}.{args.format}", result.summary)
    logger.info(f"Experiment {spec.name} finished; results in {out}")


def command_sweep(args) -> None:
    spec = load_spec(args.spec, args.seeds)
    if args.grid in APPENDIX_GRIDS:
        grid = APPENDIX_GRIDS[args.grid]
    else:
        grid = json.loads(Path(args.grid).read_text())
    out = resolve_output_dir(args.out, spec)
    result = sweep_grid(spec, grid, jobs=args.jobs)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{spec.name}-sweep.json").write_text(result.report.model_dump_json(indent=2))
    best = result.report.entries[0]
    logger.info(f"Best grid point {best.parameters}: {best.metric} {best.value:.4f}")


def command_oracle(args) -> None:
    document = EnvironmentDocument.model_validate_json(Path(args.environment).read_text())
    env = build_environment(document.environment)
    optimal = brute_force_optimal_joint(env, args.cap)
    print(json.dumps({
        "env_id": env.env_id,
        "optimal": optimal.value,
        "raw": optimal.raw,
        "witness": {str(agent): list(actions) for agent, actions in optimal.witness.items()},
    }, indent=2))


def command_report(args) -> None:
    source = Path(args.records)
    summary = None
    if source.suffix == ".db":
        experiments = [args.experiment] if args.experiment else list_experiments(str(source))
        if len(experiments) != 1:
            raise ReportError(f"Choose one of {experiments} with --experiment")
        records = load_records(str(source), experiments[0])
        name = experiments[0]
    elif source.suffix == ".json":
        records, summary = load_json_report(source)
        name = source.stem
    else:
        records = load_csv_records(source)
        name = source.stem
    if summary is None and records:
        summary = summarize_records(records)
    out = resolve_output_dir(args.out)
    emit_report(records, args.format, out / f"{name}.{args.format}", summary)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbmcts", description="Decentralized multi-agent MCTS experiments")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def common(sub):
        sub.add_argument("--out", default=None, help="output directory (default: $CBMCTS_OUTPUT_DIR)")
        sub.add_argument("--format", choices=["csv", "json"], default="csv")

    run = subparsers.add_parser("run", help="run an experiment document")
    run.add_argument("spec")
    run.add_argument("--seeds", type=parse_seeds, default=None, help='e.g. "0-19" or "1,5,9"')
    run.add_argument("--jobs", type=int, default=1)
    common(run)
    run.set_defaults(handler=command_run)

    sweep = subparsers.add_parser("sweep", help="grid search over planner parameters")
    sweep.add_argument("spec")
    sweep.add_argument("grid", help=f"grid JSON file or one of {sorted(APPENDIX_GRIDS)}")
    sweep.add_argument("--seeds", type=parse_seeds, default=None)
    sweep.add_argument("--jobs", type=int, default=1)
    common(sweep)
    sweep.set_defaults(handler=command_sweep)

    oracle = subparsers.add_parser("oracle", help="print the optimal joint utility and a witness")
    oracle.add_argument("environment")
    oracle.add_argument("--cap", type=int, default=DEFAULT_ENUMERATION_CAP)
    oracle.set_defaults(handler=command_oracle)

    report = subparsers.add_parser("report", help="convert stored records to CSV or JSON")
    report.add_argument("records", help="records.db, CSV or JSON report")
    report.add_argument("--experiment", default=None, help="experiment name inside a records database")
    common(report)
    report.set_defaults(handler=command_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.handler(args)
    except CLI_ERRORS as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
