"""
Attack-Detection Scheduling for Distributed State Estimation
Command-line entry point
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import pandas as pd
from dotenv import load_dotenv

from config import settings
from config.presets import PIPELINES, SIGNAL_FAMILIES
from src.errors import FdiaError, ScenarioError, StabilityError
from src.scenario import load_scenario
from src.scheduler import MODES
from src.simulation import oracle_check, run_case, sweep

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


def build_parser():
    """Argument parser for every subcommand"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default from FDIA_SEED or the scenario)")
    common.add_argument("--jobs", type=int, default=settings.JOBS, help="worker processes for Monte Carlo runs")
    common.add_argument("--log-level", default=settings.LOG_LEVEL)

    parser = argparse.ArgumentParser(prog="fdia", description=__doc__.strip().splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", parents=[common], help="run a scenario file or preset")
    run.add_argument("scenario", help="path to a JSON scenario or a preset name")
    _add_run_options(run)

    for name in ("case1", "case2"):
        case = commands.add_parser(name, parents=[common], help=f"run the cstr-{name} preset")
        case.add_argument("--family", choices=sorted(SIGNAL_FAMILIES), default="unstealthy")
        case.add_argument("--beta", type=float, default=None)
        case.add_argument("--mode", choices=MODES, default=None)
        case.add_argument("--upsilon-inv", type=float, default=None)
        case.add_argument("--verification", choices=("detect", "exclude"), default=None)
        _add_run_options(case)

    sw = commands.add_parser("sweep", parents=[common], help="FN/FP table over beta and upsilon_inv grids")
    sw.add_argument("--preset", default="cstr-case1")
    sw.add_argument("--family", choices=sorted(SIGNAL_FAMILIES), default="stealthy")
    sw.add_argument("--mode", choices=MODES, default=None)
    sw.add_argument("--beta-grid", type=float, nargs="+", default=[0.2, 0.5, 1.0])
    sw.add_argument("--upsilon-grid", type=float, nargs="+",
                    default=[round(0.1 * i, 1) for i in range(1, 11)])
    sw.add_argument("--seeds", type=int, default=settings.ACCEPTANCE_RUNS)
    sw.add_argument("--out", default=None)

    oc = commands.add_parser("oracle-check", parents=[common], help="scheduler vs exhaustive oracle")
    oc.add_argument("--sizes", type=int, nargs="+", default=list(range(4, 11)))
    oc.add_argument("--q-values", type=int, nargs="+", default=None)
    oc.add_argument("--trials", type=int, default=1000)
    return parser


def _add_run_options(parser):
    parser.add_argument("--seeds", type=int, default=None, help="number of Monte Carlo runs")
    parser.add_argument("--out", default=None, help="output directory for CSVs and the manifest")
    parser.add_argument("--pipelines", nargs="+", choices=PIPELINES, default=PIPELINES)
    parser.add_argument("--skip-steps", action="store_true", help="do not write the per-step CSV")


def _out_dir(args, name):
    return args.out or os.path.join(settings.OUTPUT_DIR, name)


def _print_case(case):
    frame = case.summary_frame()
    columns = ["avg_opt_rate", "regret_lhs", "regret_rhs", "fn", "fp"]
    numeric = frame[columns].apply(pd.to_numeric, errors="coerce")
    means = numeric.groupby(frame["pipeline"], sort=False).mean()
    print(means.to_string())
    for name, path in case.files.items():
        print(f"{name}: {path}")


def cmd_run(args):
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    case = run_case(scenario, seeds=args.seeds, out_dir=_out_dir(args, scenario.name), jobs=args.jobs,
                    pipelines=args.pipelines, write_steps=not args.skip_steps)
    _print_case(case)
    return 0


def cmd_case(args):
    preset = f"cstr-{args.command}"
    scenario = load_scenario(
        preset, family=args.family, beta=args.beta, mode=args.mode, upsilon_inv=args.upsilon_inv,
        seed=args.seed, verification=args.verification,
    )
    case = run_case(scenario, seeds=args.seeds, out_dir=_out_dir(args, scenario.name), jobs=args.jobs,
                    pipelines=args.pipelines, write_steps=not args.skip_steps)
    _print_case(case)
    return 0


def cmd_sweep(args):
    scenario = load_scenario(args.preset, family=args.family, mode=args.mode, seed=args.seed)
    table = sweep(scenario, args.beta_grid, args.upsilon_grid, seeds=args.seeds, jobs=args.jobs,
                  out_dir=_out_dir(args, f"{scenario.name}-sweep"))
    print(table.to_string(index=False))
    return 0


def cmd_oracle_check(args):
    report = oracle_check(args.sizes, args.q_values, args.trials,
                          seed=settings.SEED if args.seed is None else args.seed)
    print(json.dumps(report, indent=2))
    return 0 if report["success"] else 1


COMMANDS = {
    "run": cmd_run,
    "case1": cmd_case,
    "case2": cmd_case,
    "sweep": cmd_sweep,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None):
    args = build_parser().parse_args(argv)

    # Configure logging
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO))

    try:
        return COMMANDS[args.command](args)
    except ScenarioError as e:
        logger.error(str(e))
        return 2
    except StabilityError as e:
        logger.error(str(e))
        return 3
    except FdiaError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
