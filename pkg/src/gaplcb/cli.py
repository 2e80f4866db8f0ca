"""Command-line entry point: ``gaplcb <subcommand> --instance SPEC ...``."""
from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from dataclasses import asdict

from . import io as gio
from .dataset import DatasetIndexError, sample_trajectories
from .diagnostics import ThresholdSpec, check_pessimism, threshold_certificate
from .experiments import BudgetExhausted, min_n_search, run_trial, sweep
from .instances import GenerationBudgetExceeded, instance_hash, parse_instance
from .mdp import NoPositiveGap, ValidationError
from .vi_lcb import TIE_BREAKS, SolverConfig, run_subsampled_vi_lcb

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BUDGET = 3


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _emit(obj, path):
    with _output(path) as fh:
        fh.write(obj if isinstance(obj, str) else json.dumps(obj, indent=1))
        fh.write("" if isinstance(obj, str) and obj.endswith("\n") else "\n")


def _config(args) -> SolverConfig:
    iota = args.iota if args.iota == "auto" else float(args.iota)
    return SolverConfig(c_b=args.cb, delta=args.delta, iota=iota, tie_break=args.tie_break)


def _solve(args):
    mdp, mu = parse_instance(args.instance)
    if args.dataset:
        with open(args.dataset) as fh:
            data, header = gio.read_dataset(fh)
        if header.get("instance_hash") and header["instance_hash"] != instance_hash(mdp):
            raise ValueError("dataset was generated from a different instance")
        seed = data.seed
    else:
        data = sample_trajectories(mdp, mu, args.n, args.seed)
        seed = args.seed
    return mdp, run_subsampled_vi_lcb(data, mdp, _config(args), seed)


def cmd_gen_instance(args):
    mdp, mu = parse_instance(args.instance)
    out = gio.mdp_to_json(mdp)
    out["name"] = mdp.name
    out["instance_hash"] = instance_hash(mdp)
    out["behavior"] = gio.policy_to_json(mu)
    _emit(out, args.out)


def cmd_gen_dataset(args):
    mdp, mu = parse_instance(args.instance)
    data = sample_trajectories(mdp, mu, args.n, args.seed)
    with _output(args.out) as fh:
        gio.write_dataset(data, fh, instance_hash(mdp))


def cmd_solve(args):
    _, sol = _solve(args)
    _emit(sol.to_json(), args.out)


def cmd_certify(args):
    mdp, sol = _solve(args)
    out = {"pessimism": check_pessimism(mdp, sol).to_json()}
    try:
        spec = ThresholdSpec(args.threshold)
        out["threshold"] = threshold_certificate(mdp, sol, spec).to_json()
    except NoPositiveGap:
        out["threshold"] = None
    _emit(out, args.out)


def cmd_trial(args):
    mdp, mu = parse_instance(args.instance)
    res = run_trial(mdp, mu, args.n, _config(args), args.seed)
    _emit(asdict(res), args.out)


def _grid(text: str) -> list[int]:
    return [int(float(x)) for x in text.split(",") if x.strip()]


def cmd_sweep(args):
    mdp, mu = parse_instance(args.instance)
    res = sweep(mdp, mu, _grid(args.grid), args.trials, _config(args), args.seed, args.eps,
                workers=args.workers)
    if args.format == "csv":
        _emit(res.to_csv(), args.out)
    else:
        _emit({"instance": res.instance, "config": res.config, "base_seed": res.base_seed,
               "points": [asdict(p) for p in res.points]}, args.out)


def cmd_find_min_n(args):
    mdp, mu = parse_instance(args.instance)
    res = min_n_search(mdp, mu, args.eps, args.target_rate, _config(args), args.seed, args.trials,
                       args.max_n, workers=args.workers)
    _emit({"instance": args.instance, "n": res.n, "eps": args.eps, "target_rate": args.target_rate,
           "trials": args.trials, "rates": {str(k): v for k, v in sorted(res.rates.items())}}, args.out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", required=True,
                        help="e.g. lb(3,2,4,0.2,0.3,7), necessity(10,0.1), random(3,2,3,0.2,1), chain(0.4)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output path (default stdout)")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--delta", type=float, default=0.1)
    solver.add_argument("--cb", type=float, default=2.0)
    solver.add_argument("--iota", default="auto")
    solver.add_argument("--tie-break", default="lowest-index", choices=TIE_BREAKS)

    p = argparse.ArgumentParser(prog="gaplcb", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-instance", parents=[common], help="write an instance as JSON")
    s.set_defaults(func=cmd_gen_instance)

    s = sub.add_parser("gen-dataset", parents=[common], help="sample a behavior dataset")
    s.add_argument("--n", type=int, required=True)
    s.set_defaults(func=cmd_gen_dataset)

    for name, func, hlp in (("solve", cmd_solve, "run subsampled VI-LCB"),
                            ("certify", cmd_certify, "solve, then check pessimism and thresholding")):
        s = sub.add_parser(name, parents=[common, solver], help=hlp)
        s.add_argument("--n", type=int, default=0)
        s.add_argument("--dataset", default=None, help="dataset file from gen-dataset (overrides --n)")
        if name == "certify":
            s.add_argument("--threshold", default="constant", choices=("constant", "variance_adaptive"))
        s.set_defaults(func=func)

    s = sub.add_parser("trial", parents=[common, solver], help="one seeded sample-solve-evaluate trial")
    s.add_argument("--n", type=int, required=True)
    s.set_defaults(func=cmd_trial)

    s = sub.add_parser("sweep", parents=[common, solver], help="trials over a grid of N")
    s.add_argument("--grid", required=True, help="comma-separated N values")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--eps", type=float, default=None, help="success threshold (default: exact optimality)")
    s.add_argument("--format", default="csv", choices=("csv", "json"))
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("find-min-n", parents=[common, solver], help="smallest N reaching a success rate")
    s.add_argument("--eps", type=float, default=None, help="success threshold (default: exact optimality)")
    s.add_argument("--target-rate", type=float, default=0.9)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--max-n", type=int, default=2**30)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_find_min_n)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except BudgetExhausted as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValidationError, DatasetIndexError, GenerationBudgetExceeded, NoPositiveGap, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
