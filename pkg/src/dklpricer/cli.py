"""Command-line entry point: ``python -m dklpricer {price,sweep,surface,verify}``.

Exit status: 0 success, 1 configuration error, 2 numerical failure,
3 oracle failure.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench, pricer
from .config import load_config
from .errors import (DomainError, EmptyPaths, InvalidAxis, InvalidConfig, NotPSD,
                     ShapeMismatch, TrainingDiverged, UnsupportedDegree, UnsupportedDimension)
from .payoff import discount

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ORACLE = 0, 1, 2, 3
_CONFIG_ERRORS = (InvalidConfig, InvalidAxis, UnsupportedDimension, UnsupportedDegree, OSError)
_NUMERIC_ERRORS = (NotPSD, TrainingDiverged, DomainError, EmptyPaths, ShapeMismatch,
                   ArithmeticError, np.linalg.LinAlgError)


def _add_common(p):
    p.add_argument("--config", required=True, help="experiment config file (INI)")
    p.add_argument("--method", help="lsm, gpr, dkl40, dkl200 or dkl<M>")
    p.add_argument("--dims", type=int, help="number of assets d")
    p.add_argument("--s0", type=float, help="initial price of every asset")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--batches", type=int, help="number of independent batches")
    p.add_argument("--paths", type=int, help="paths per batch")
    p.add_argument("--iterations", type=int, help="DKL training iterations")
    p.add_argument("--workers", type=int, help="worker processes (default: $DKLPRICER_WORKERS or CPU count)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dklpricer",
                                 description="Bermudan option pricing by regression Monte Carlo.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="price a config over its batches")
    _add_common(p)
    p.add_argument("--out", help="CSV report to append to")

    p = sub.add_parser("sweep", help="price a config over values of one parameter")
    _add_common(p)
    p.add_argument("--axis", required=True, choices=bench.SWEEP_AXES)
    p.add_argument("--values", required=True,
                   help="comma-separated values (extractor widths joined by '-')")
    p.add_argument("--out", help="CSV file for the sweep")

    p = sub.add_parser("surface", help="continuation-value grid at the last regression step (d=2)")
    _add_common(p)
    p.add_argument("--out", required=True, help="CSV grid s1,s2,value")

    p = sub.add_parser("verify", help="run the oracle suite")
    p.add_argument("--seed", type=int, default=0)
    return ap


def _config(args):
    return load_config(args.config, method=args.method, d=args.dims, s0=args.s0,
                       master_seed=args.seed, batches=args.batches, paths=args.paths,
                       iterations=args.iterations)


def _cmd_price(args) -> int:
    cfg = _config(args)
    row = bench.run_experiment(cfg, out=args.out, workers=args.workers)
    bm = "" if row.benchmark is None else f"  benchmark {row.benchmark:.3f}  error {row.rel_error_pct:.3f}%"
    flag = "  (single batch: std not estimated)" if row.batches == 1 else ""
    print(f"{row.name} {row.method} d={row.d}: {row.price:.4f} ({row.std:.4f}){bm}"
          f"  [{row.wall_time:.1f}s]{flag}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _config(args)
    values = [v for v in args.values.split(",") if v.strip()]
    for row, v in zip(bench.run_sweep(cfg, args.axis, values, out=args.out, workers=args.workers),
                      values):
        print(f"{args.axis}={v}: {row.price:.4f} ({row.std:.4f})  [{row.wall_time:.1f}s]")
    if not values and args.out:
        print(f"no values; wrote header only to {args.out}")
    return EXIT_OK


def _cmd_surface(args) -> int:
    cfg = _config(args)
    if cfg.d != 2:
        raise UnsupportedDimension(f"continuation surface needs d=2, got d={cfg.d}")
    seed = pricer.batch_seeds(cfg.master_seed, 1)[0]
    paths = cfg.simulate(seed)
    fitted = pricer.fit_last_step(paths, cfg.payoff_spec, cfg.regressor(),
                                  np.random.default_rng([seed, 1]))
    t = paths.times
    rows = pricer.continuation_surface(fitted, discount(cfg.rate, t[-2], t[-1]))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        pricer.write_surface_csv(rows, fh)
    print(f"wrote {len(rows)} grid points to {args.out}; "
          f"monotonicity violations along s2=180: {pricer.monotonicity_violations(rows)}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = bench.run_oracle_suite(seed=args.seed)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} oracle checks passed")
    return EXIT_ORACLE if failed else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cmd = {"price": _cmd_price, "sweep": _cmd_sweep, "surface": _cmd_surface,
           "verify": _cmd_verify}[args.command]
    try:
        return cmd(args)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
