"""
dafilters command line.

    dafilters run --config configs/3dvar_nse.toml
    dafilters sweep --config configs/3dvar_nse.toml --param sigma --values 0.2,0.1,0.05
    dafilters verify-identities --seed 7
    dafilters calibrate --config configs/enkf_lorenz96.toml
    dafilters report --dir runs
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from core.errors import ConfigurationError, DAError
from core.logging_setup import configure_logging
from core.schemas import EXIT_CODES, IDENTITY_FAILURE_EXIT, BoundKind, FilterKind, RunStatus
from diagnostics.bounds import bound_kind_for, build_bound_inputs, check_conditions, inflation_threshold
from diagnostics.calibration import calibrate_constants
from diagnostics.identities import run_identity_suite
from orchestration import persistence
from orchestration.builders import build_covariance, build_operator, build_system
from orchestration.config import load_config, resolve_cli_overrides, run_id_for
from orchestration.experiment_run import run_twin_experiment_sync
from orchestration.graph import spin_up_truth
from orchestration.sweep import run_sweep_sync

logger = logging.getLogger("cli")

RUN_ERROR_EXIT = EXIT_CODES[RunStatus.SYSTEM_ERROR]


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="experiment config (.toml, .yaml or .json)")
    p.add_argument("--seed", type=int, help="base seed; the four stream seeds derive from it")
    p.add_argument("--replicas", type=int, help="number of independent noise replicas")
    p.add_argument("--out", help="output directory (default: DAF_OUTPUT_DIR or runs)")
    p.add_argument("--threads", type=int, help="worker pool size for replicas")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dafilters", description="Continuous-time data assimilation experiments")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default: DAF_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one twin experiment")
    _add_run_flags(run)

    sweep = sub.add_parser("sweep", help="run one experiment per parameter value")
    _add_run_flags(sweep)
    sweep.add_argument("--param", required=True, help="dotted config field or alias (sigma, beta, mu, nu, dt, K, ...)")
    sweep.add_argument("--values", required=True, help="comma-separated values; mu also takes k*threshold")

    ident = sub.add_parser("verify-identities", help="run the exact-algebra identity suite")
    ident.add_argument("--seed", type=int, default=0)
    ident.add_argument("--resolutions", type=_int_list, default=[64, 128])
    ident.add_argument("--samples", type=int, default=200)

    cal = sub.add_parser("calibrate", help="calibrate constants and evaluate accuracy conditions")
    _add_run_flags(cal)

    report = sub.add_parser("report", help="aggregate summary.json files into a CSV table")
    report.add_argument("--dir", required=True, help="directory searched recursively for summary.json")
    report.add_argument("--output", help="CSV path (default: <dir>/report.csv)")
    return parser


def _load(args, parser: argparse.ArgumentParser):
    try:
        config = load_config(args.config)
        return resolve_cli_overrides(config, seed=args.seed, replicas=args.replicas, out=args.out,
                                     threads=args.threads)
    except ConfigurationError as e:
        parser.error(str(e))


def cmd_run(args, parser) -> int:
    config = _load(args, parser)
    summary = run_twin_experiment_sync(config)
    print(f"{summary.run_id}: {summary.status.value} -> {Path(config.output_dir) / summary.run_id}")
    if summary.estimate.theoretical_bound is not None:
        print(f"  limsup {summary.estimate.limsup} / tail {summary.estimate.tail_mean} "
              f"vs bound {summary.estimate.theoretical_bound}")
    return summary.exit_code


def cmd_sweep(args, parser) -> int:
    config = _load(args, parser)
    values = [v for v in args.values.split(",") if v.strip()]
    if not values:
        parser.error("--values needs at least one value")
    try:
        results = run_sweep_sync(config, args.param, values, out=config.output_dir)
    except ConfigurationError as e:
        parser.error(str(e))
    for raw, summary in results:
        print(f"{args.param}={raw}: {summary.status.value} limsup={summary.estimate.limsup} "
              f"bound={summary.estimate.theoretical_bound}")
    codes = [s.exit_code for _, s in results]
    if RUN_ERROR_EXIT in codes:
        return RUN_ERROR_EXIT
    return max(codes) if codes else 0


def cmd_verify(args, parser) -> int:
    report = run_identity_suite(seed=args.seed, resolutions=args.resolutions, samples=args.samples)
    for check in report.checks:
        mark = "PASS" if check.passed else "FAIL"
        print(f"{mark}  {check.name:<34} {check.residual:.3e} < {check.tolerance:.0e}")
    return 0 if report.passed else IDENTITY_FAILURE_EXIT


def cmd_calibrate(args, parser) -> int:
    config = _load(args, parser)
    system = build_system(config)
    truth, spin = spin_up_truth(config, system)
    op = build_operator(config, system)
    calibration = calibrate_constants(system, op, config.calibration_corpus, config.seeds.truth)
    out_dir = Path(config.output_dir) / f"{run_id_for(config)}_calibration"
    persistence.write_json_atomic(out_dir / "calibration.json", calibration)
    print(calibration.model_dump_json(indent=2))

    inputs = build_bound_inputs(system, op, config.filter, config.observation.sigma, calibration, spin.M_u,
                                horizon=config.time.horizon, covariance=build_covariance(config, system, op))
    report = check_conditions(bound_kind_for(config.filter), inputs)
    persistence.write_json_atomic(out_dir / "bound_report.json", report)
    print(report.table())
    if config.filter.kind in (FilterKind.ENKF, FilterKind.ENSRKF):
        print(f"inflation threshold  {inflation_threshold(BoundKind(config.filter.kind.value), inputs)}")
    return 0 if report.guaranteed else EXIT_CODES[RunStatus.BOUND_NOT_GUARANTEED]


def cmd_report(args, parser) -> int:
    root = Path(args.dir)
    if not root.is_dir():
        parser.error(f"not a directory: {root}")
    table = persistence.summaries_table(root)
    if table.empty:
        print(f"no summary.json under {root}")
        return 0
    output = Path(args.output) if args.output else root / "report.csv"
    table.to_csv(output, index=False)
    print(table.to_string(index=False))
    print(f"wrote {output}")
    return 0


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "verify-identities": cmd_verify,
    "calibrate": cmd_calibrate,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args, parser)
    except DAError as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return RUN_ERROR_EXIT


if __name__ == "__main__":
    sys.exit(main())
