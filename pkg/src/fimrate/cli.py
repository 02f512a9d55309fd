"""Command-line front end: ``fimrate validate | run | sweep``.

Exit codes: 0 on success (including infeasible drops, which are data), 1 when
a validation check fails, 2 on configuration or usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, to_dict, with_overrides
from .results import (DROP_COLUMNS, SUMMARY_COLUMNS, TRAJECTORY_COLUMNS, drop_rows, result_record,
                      trajectory_rows, write_json, write_table)
from .scenario import build_scenario, run_sweep, solve_scheme
from .validation import run_validation

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
U64_MAX = 2**64 - 1

log = logging.getLogger("fimrate")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML config file (defaults apply when omitted)")
    common.add_argument("--seed", type=_u64, default=0, help="base seed for all randomness (default 0)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.out_dir)")
    common.add_argument("--jobs", type=_positive, default=1, help="worker processes across drops")
    common.add_argument("-v", "--verbose", action="store_true", help="log solver progress")

    parser = argparse.ArgumentParser(prog="fimrate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="run the self-check suites")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--inject-fault", action="append", default=[], choices=("gradient",),
                   help=argparse.SUPPRESS)

    p = sub.add_parser("run", parents=[common], help="solve one scheme on one or more drops")
    p.add_argument("--drops", type=_positive, help="number of consecutive drops (default 1)")

    p = sub.add_parser("sweep", parents=[common], help="sweep one axis over all configured schemes")
    p.add_argument("--drops", type=_positive, help="drops per sweep point (overrides sweep.drops)")
    p.add_argument("--per-drop", action="store_true", help="also write the per-drop long-format CSV")
    return parser


def cmd_validate(cfg: RunConfig, args) -> int:
    report = run_validation(cfg.scenario, level=args.level, seed=args.seed,
                            faults=frozenset(args.inject_fault))
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {c.name}: error={c.error:.3e} threshold={c.threshold:.1e} ({c.seconds:.2f}s)")
    out = Path(cfg.output.out_dir)
    path = write_json(out / "validation.json", {"seed": args.seed, **report.to_dict()})
    print(f"report: {path}")
    if not report.passed:
        print(f"failed checks: {', '.join(report.failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _effective_scheme(cfg: RunConfig) -> str:
    """A morphing scheme with zero morph range is the rigid array."""
    scheme = cfg.run.scheme
    if cfg.scenario.y_max_wavelengths == 0 and scheme.startswith("FIM"):
        return "RAA" + scheme[3:]
    return scheme


def _solve_drop(args):
    cfg, seed, drop, scheme = args
    scenario = build_scenario(cfg.scenario, seed, drop)
    return drop, solve_scheme(scenario, scheme, cfg.solver), scenario.geometry.wavelength


def cmd_run(cfg: RunConfig, args) -> int:
    scheme = _effective_scheme(cfg)
    n = args.drops or 1
    tasks = [(cfg, args.seed, cfg.run.drop + i, scheme) for i in range(n)]
    if args.jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            solved = list(pool.map(_solve_drop, tasks))
    else:
        solved = [_solve_drop(t) for t in tasks]
    records, traj = [], []
    for drop, res, lam in solved:
        records.append(result_record(drop, res, lam))
        traj.extend(trajectory_rows(drop, res))
        flag = "feasible" if res.feasible else "INFEASIBLE"
        print(f"drop {drop}: {scheme} sum rate {res.sum_rate:.4f} bps/Hz ({flag})")
    out = Path(cfg.output.out_dir)
    write_json(out / "result.json", {"command": "run", "scheme": scheme,
                                     "requested_scheme": cfg.run.scheme, "seed": args.seed,
                                     "config": to_dict(cfg), "results": records})
    write_table(out / "trajectory.csv", traj, TRAJECTORY_COLUMNS)
    print(f"wrote {out / 'result.json'} and {out / 'trajectory.csv'}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    spec = cfg.sweep_spec()
    rows, outcomes = run_sweep(cfg.scenario, spec, cfg.solver, seed=args.seed, jobs=args.jobs)
    out = Path(cfg.output.out_dir)
    write_table(out / "sweep.csv", rows, SUMMARY_COLUMNS)
    if args.per_drop or cfg.output.per_drop_csv:
        write_table(out / "sweep_drops.csv", drop_rows(spec.axis, outcomes, spec.schemes), DROP_COLUMNS)
    write_json(out / "sweep.json", {"command": "sweep", "seed": args.seed, "config": to_dict(cfg),
                                    "rows": rows,
                                    "errors": [{"value": o.value, "drop": o.drop, "error": o.error}
                                               for o in outcomes if o.error]})
    for r in rows:
        print(f"{r['axis']}={r['value']:g} {r['scheme']}: {r['mean_sum_rate_bps_hz']:.4f} "
              f"+- {r['stderr']:.4f} ({r['drops_used']} drops, {r['infeasible_drops']} infeasible)")
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        cfg = with_overrides(cfg, drops=getattr(args, "drops", None) if args.command == "sweep" else None,
                             out_dir=args.out)
        if args.command == "sweep":
            cfg.sweep_spec()
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
