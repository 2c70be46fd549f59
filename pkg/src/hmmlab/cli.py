"""Command line entry point: ``hmmlab <experiment> --seed S --out DIR [...]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import HmmLabError
from .experiments import EXPERIMENTS, ExperimentConfig, run, trend_test

COLUMNS = {
    "cycle-cond": "c, eps, n, m, tau, k, trials, mean_kappa, median_kappa, mean_log10_kappa, "
    "infinite_trials, seed, instance_hash",
    "degree-cond": "d, eps, n, m, tau, k, trials, mean_kappa, median_kappa, mean_log10_kappa, "
    "infinite_trials, seed, instance_hash",
    "recover-exact": "trial, n, m, tau, family, kruskal, status, max_col_l1, T_max_col_l1, O_max_col_l1, "
    "retries, seed, instance_hash (per-trial estimates in recovery.json)",
    "recover-sampled": "samples, trial, status, max_col_l1, seed, window_seed, instance_trial, instance_hash",
    "lowerbound-decay": "n, d, m, t, measured_contraction, alpha_bound, lambda2, trial, seed",
    "identifiability": "check, n, m, t, measured, bound, passed, seed",
}


def _ints(s: str) -> tuple:
    return tuple(int(x) for x in s.split(",") if x)


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split(",") if x)


def _experiment_parser(sub, name: str):
    p = sub.add_parser(name, help=f"run the {name} experiment",
                       description=f"CSV columns: {COLUMNS[name]}")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None, help="output directory (default: results/<experiment>)")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--tau", type=int)
    p.add_argument("--k", type=int, default=2, help="output support size")
    p.add_argument("--workers", type=int, default=1)
    if name == "cycle-cond":
        p.add_argument("--cycles", type=_ints, default=(2, 4, 8, 16))
    if name in ("cycle-cond", "degree-cond"):
        p.add_argument("--eps", type=_floats, default=())
    if name == "degree-cond":
        p.add_argument("--degrees", type=_ints, default=(2, 4, 8, 16))
    if name in ("recover-exact", "recover-sampled"):
        p.add_argument("--family", choices=("cycle", "cycle-mixture"), default="cycle")
    if name == "recover-sampled":
        p.add_argument("--samples", type=_ints, default=(1_000, 10_000, 100_000, 1_000_000))
    if name == "lowerbound-decay":
        p.add_argument("--ns", type=_ints, default=(100, 500))
        p.add_argument("--d", type=int, default=16)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmmlab", description="Overcomplete HMM moment experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _experiment_parser(sub, name)
    t = sub.add_parser("trend", help="Spearman trend test on a results CSV")
    t.add_argument("csv")
    t.add_argument("--group-by", default=None)
    t.add_argument("--order-by", required=True)
    t.add_argument("--value", default="mean_kappa")
    t.add_argument("--expect", choices=("increasing", "decreasing"), required=True)
    t.add_argument("--threshold", type=float, default=0.8)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "trend":
        try:
            res = trend_test(args.csv, args.group_by, args.order_by, args.expect, args.value, args.threshold)
        except (HmmLabError, KeyError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for key, rho in res.per_group.items():
            print(f"{args.group_by}={key}\trho={rho:+.4f}")
        print(f"median_rho={res.median_rho:+.4f}\texpect={res.expect}\tverdict={res.verdict}")
        return 0 if res.passed else 1
    fields = {k: v for k, v in vars(args).items() if k not in ("command", "verbose") and v is not None}
    fields.setdefault("out", f"results/{args.command}")
    cfg = ExperimentConfig(experiment=args.command, **fields)
    code = run(cfg)
    if code == 2:
        print("error: invalid configuration (see log above)", file=sys.stderr)
    elif code == 0:
        print(f"wrote {cfg.out}/results.csv and {cfg.out}/manifest.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
