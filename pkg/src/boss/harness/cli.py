"""Command line: ``boss run|sweep|params|cover-size|selftest``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure
(including failed runs and failed self-test checks).
"""
from __future__ import annotations

import argparse
import logging
import sys

import yaml

from ..algorithms import theorem1_params
from ..errors import BossError
from ..subspace_geom import cover_size_bound
from .config import OUTPUT_ROOT_ENV, load_config
from .runner import run_experiment, sweep
from .selftest import selftest

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.workers is not None:
        cfg = _override_workers(cfg, args.workers)
    result = run_experiment(cfg)
    print(f"wrote {result.output_dir}")
    for spec in cfg.algorithms:
        regrets = result.final_regrets(spec.label)
        if regrets:
            print(f"  {spec.label:<20} runs={len(regrets):<3} mean final regret={sum(regrets) / len(regrets):.1f}")
    for f in result.failures:
        print(f"  FAILED {f.label} seed={f.seed} rep={f.repetition}: {f.error}", file=sys.stderr)
    return EXIT_RUNTIME if result.failures else EXIT_OK


def _override_workers(cfg, workers):
    from .config import parse_config

    raw = dict(cfg.raw)
    raw["workers"] = workers
    return parse_config(raw)


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    with open(args.grid) as fh:
        grid = yaml.safe_load(fh)
    if not isinstance(grid, dict):
        raise BossError(f"{args.grid}: sweep grid must be a mapping")
    rows = sweep(cfg, grid)
    for r in rows:
        print(f"{r['rank']:>3}  {r['status']:<8} {r['mean_final_regret']:>12.1f} ± {r['std_final_regret']:<10.1f} "
              f"{r['params']}  {r['reason']}")
    return EXIT_RUNTIME if any(r["status"] == "failed" for r in rows) else EXIT_OK


def _cmd_params(args) -> int:
    bp = theorem1_params(args.N, args.tau, args.d, args.m, args.c2)
    for k in ("p", "tau1", "tau2", "alpha", "epsilon", "delta", "c2", "eta"):
        print(f"{k:<8} {getattr(bp, k)!r}")
    return EXIT_OK


def _cmd_cover_size(args) -> int:
    print(f"{cover_size_bound(args.d, args.m, args.eps):.6g}")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    report = selftest()
    print(report.text())
    return EXIT_OK if report.passed else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="boss", description=__doc__.splitlines()[0],
                                 epilog=f"Relative output directories are placed under ${OUTPUT_ROOT_ENV} when set.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every (algorithm, seed) job of a config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, help="override the worker count")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="grid-search one algorithm block")
    p.add_argument("config")
    p.add_argument("grid")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("params", help="print the closed-form BOSS parameters")
    p.add_argument("N", type=int)
    p.add_argument("tau", type=int)
    p.add_argument("d", type=int)
    p.add_argument("m", type=int)
    p.add_argument("--c2", type=float, default=1.0)
    p.set_defaults(func=_cmd_params)

    p = sub.add_parser("cover-size", help="print the grid-cover cardinality bound")
    p.add_argument("d", type=int)
    p.add_argument("m", type=int)
    p.add_argument("eps", type=float)
    p.set_defaults(func=_cmd_cover_size)

    p = sub.add_parser("selftest", help="run the invariant suite")
    p.set_defaults(func=_cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BossError, ValueError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # anything else is a bug or numerical failure at run time
        logging.getLogger(__name__).exception("runtime failure")
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
