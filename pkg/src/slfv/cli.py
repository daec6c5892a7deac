"""Command line entry point.

    slfv <kind> [--config cfg.json] [--seed N] [--out DIR]
                [--replicates N] [--threads K]

Kinds: forward | dual | skewbm | pde | verify:<suite> | verify:all.
Exit code 0 iff every required check passed.
"""

import argparse
import sys

from .harness import ExperimentConfig, run_experiment, SUITES


def build_parser():
    ap = argparse.ArgumentParser(
        prog="slfv",
        description="Two-radius interface population simulator and its verification suites",
    )
    ap.add_argument("kind",
                    help="forward | dual | skewbm | pde | verify:<suite> | verify:all "
                         f"(suites: {', '.join(sorted(SUITES))})")
    ap.add_argument("--config", help="JSON experiment configuration", default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None)
    ap.add_argument("--replicates", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    config = ExperimentConfig.from_json(
        args.config,
        kind=args.kind,
        seed=args.seed,
        out_dir=args.out,
        replicates=args.replicates,
        threads=args.threads,
    )
    rows = run_experiment(config)
    for r in rows:
        print(r.line())
    n_fail = sum(1 for r in rows if r.required and not r.passed)
    print(f"{len(rows)} rows, {n_fail} required failures")
    return 1 if n_fail else 0


if __name__ == "__main__":
    sys.exit(main())
