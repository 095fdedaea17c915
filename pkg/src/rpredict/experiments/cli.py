"""Command-line entry point ``rpredict``.

Config-driven runs::

    rpredict fig3 --config configs/fig3.json --seed 1 --out results/
    rpredict fig4 | riskinfo | minimax | sfrl-validate --config FILE ...

Direct forms::

    rpredict regress fig3 --cxy 0.95 --sigma-x 1 --sigma-y 1 --lambdas 0.1,0.5 --n 100000
    rpredict riskinfo solve joint.json --lambda 0.5 --loss zero-one
    rpredict minimax solve --gamma hull.json --lambda 0.1,0.5 --loss zero-one

Errors go to stderr as one JSON object with a machine-readable code, and the
exit status is nonzero.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .runner import (E_INVALID_PARAMETER, E_UNKNOWN_EXPERIMENT, EXPERIMENTS,
                     ExperimentConfig, ExperimentError, run_config)


def parse_grid(text: str) -> list[float]:
    """'0.1,0.5,1' or 'geom:LO:HI:NUM' or 'lin:LO:HI:NUM'."""
    try:
        if text.startswith(("geom:", "lin:")):
            kind, lo, hi, num = text.split(":")
            fn = np.geomspace if kind == "geom" else np.linspace
            vals = fn(float(lo), float(hi), int(num)).tolist()
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ExperimentError(E_INVALID_PARAMETER, f"cannot parse lambda grid {text!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise ExperimentError(E_INVALID_PARAMETER, f"lambdas must be positive: {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rpredict",
                                 description="Risk-information tradeoffs and one-shot schemes.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p):
        p.add_argument("--config", type=Path, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        common(p)
        if name in ("riskinfo", "minimax"):
            action = p.add_subparsers(dest="action", metavar="ACTION")
            s = action.add_parser("solve", help="solve directly without a config file")
            common(s)
            if name == "riskinfo":
                s.add_argument("joint", type=Path, help="FiniteJoint JSON")
                s.add_argument("--ncluster", type=int, help="cluster count for --loss log")
            else:
                s.add_argument("--gamma", type=Path, required=True, help="ambiguity set JSON")
            s.add_argument("--lambda", dest="lambdas", required=True,
                           help="comma list or geom:LO:HI:NUM")
            s.add_argument("--loss", default="zero-one",
                           help="zero-one, log, or matrix:FILE")
            s.add_argument("--tol", type=float)

    r = sub.add_parser("regress", help="closed-form minimax regression")
    ract = r.add_subparsers(dest="action", required=True, metavar="ACTION")
    f3 = ract.add_parser("fig3", help="rate/risk sweep for a scalar moment set")
    f3.add_argument("--cxy", type=float, default=0.95)
    f3.add_argument("--sigma-x", type=float, default=1.0, help="standard deviation of X")
    f3.add_argument("--sigma-y", type=float, default=1.0, help="standard deviation of Y")
    f3.add_argument("--mu-x", type=float, default=0.0)
    f3.add_argument("--mu-y", type=float, default=0.0)
    f3.add_argument("--lambdas", help="comma list or geom:LO:HI:NUM (default: our log grid)")
    f3.add_argument("--n", type=int, default=100_000, help="Monte Carlo rounds per lambda")
    f3.add_argument("--seed", type=int, default=0)
    f3.add_argument("--workers", type=int, default=1)
    f3.add_argument("--out", type=Path, default=Path("fig3.csv"), help="CSV path")
    return ap


def _config_from_args(args) -> tuple[ExperimentConfig, Path]:
    if args.command == "regress":
        params = {"cxy": args.cxy, "sigma_x2": args.sigma_x ** 2, "sigma_y2": args.sigma_y ** 2,
                  "mu_x": args.mu_x, "mu_y": args.mu_y, "n_mc": args.n,
                  "workers": args.workers}
        if args.lambdas:
            params["lambdas"] = parse_grid(args.lambdas)
        out = args.out
        return ExperimentConfig("fig3", params, args.seed, out.name), out.parent

    if getattr(args, "action", None) == "solve":
        params = {"lambdas": parse_grid(args.lambdas), "loss": args.loss}
        if args.command == "riskinfo":
            params["joint"] = str(args.joint.resolve())
            if args.ncluster:
                params["ncluster"] = args.ncluster
        else:
            params["gamma"] = str(args.gamma.resolve())
        if args.tol:
            params["tol"] = args.tol
        return ExperimentConfig(args.command, params, args.seed or 0), args.out

    if args.config is not None:
        cfg = ExperimentConfig.load(args.config)
        if cfg.experiment != args.command:
            raise ExperimentError(E_INVALID_PARAMETER,
                                  f"config is for {cfg.experiment!r}, not {args.command!r}")
    else:
        cfg = ExperimentConfig(args.command)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg, args.out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and not argv[0].startswith("-") and argv[0] not in (*EXPERIMENTS, "regress"):
        err = ExperimentError(E_UNKNOWN_EXPERIMENT, f"unknown experiment {argv[0]!r}")
        print(json.dumps(err.to_dict()), file=sys.stderr)
        return 2
    args = build_parser().parse_args(argv)
    try:
        cfg, out_dir = _config_from_args(args)
        res = run_config(cfg, out_dir)
    except ExperimentError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    print(json.dumps({"csv": str(res.csv_path), "meta": str(res.meta_path),
                      "extra": [str(p) for p in res.extra_paths],
                      "wall_time_s": round(res.meta["wall_time_s"], 3)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
