"""Command line entry point: ``tabgail run | suite | slope``."""

import argparse
import json
import math
import sys

from .harness import ExperimentConfig, estimate_rate_slope, read_metrics_csv, run_experiment
from .suites import SUITES, run_property_suite


def _parser():
    p = argparse.ArgumentParser(prog="tabgail", description="Nested-loop GAIL on tabular MDPs.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write a metrics CSV")
    run.add_argument("--config", help="YAML key: value file mirroring the experiment fields")
    run.add_argument("--seed", type=int)
    run.add_argument("--algo", choices=("ppg", "fwpg", "trpo", "trpo-reg", "npg"))
    run.add_argument("--mode", choices=("sample", "exact-q", "exact-all"))
    run.add_argument("--out", help="CSV output path (default: stdout summary only)")

    suite = sub.add_parser("suite", help="run a property suite and print a JSON report")
    suite.add_argument("--name", required=True, help=f"one of {', '.join(SUITES)}")
    suite.add_argument("--seed", type=int, default=0)

    slope = sub.add_parser("slope", help="fit the log-log slope of running_avg_gap")
    slope.add_argument("--csv", required=True)
    slope.add_argument("--tmin", type=int, default=0)
    return p


def main(argv=None):
    parser = _parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
        cfg = cfg.replace(seed=args.seed, algorithm=args.algo, mode=args.mode, out=args.out)
        res = run_experiment(cfg)
        print(f"initial_gap {res.initial_gap:.6g}")
        print(f"final_gap {res.final_gap:.6g}")
        print(f"slope {res.slope:.4f}" if not math.isnan(res.slope) else "slope n/a")
        for k, v in res.constants.items():
            print(f"{k} {v:.6g}")
        return 0
    if args.command == "suite":
        try:
            report = run_property_suite(args.name, args.seed)
        except ValueError as exc:
            parser.error(str(exc))
        json.dump(report, sys.stdout, indent=1)
        print()
        return 0 if report["passed"] else 1
    try:
        slope = estimate_rate_slope(read_metrics_csv(args.csv), t_min=args.tmin)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{slope:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
