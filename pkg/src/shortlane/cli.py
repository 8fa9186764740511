"""Command-line entry point: single runs, sweeps, comparisons, validation.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime error.
Flags override values from a JSON config file when both are given.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Optional

from . import experiment
from .engine import SimConfig
from .errors import (
    ComparisonError,
    IllegalMovementError,
    InvalidCodeError,
    InvalidConfigError,
    InvalidGeometryError,
)
from .experiment import DESIGN_KEYS, SweepSpec
from .network import GeometryParams, build_design

_CONFIG_ERRORS = (
    InvalidCodeError,
    InvalidConfigError,
    InvalidGeometryError,
    IllegalMovementError,
    ComparisonError,
    FileNotFoundError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 1
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="shortlane", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_sim_flags(p):
        p.add_argument("--dt", type=float, default=None, help="step size in seconds")
        p.add_argument("--horizon", type=float, default=None, help="run length in seconds")
        p.add_argument(
            "--count-pre-entry-delay", action="store_true", default=None,
            help="include waiting upstream of the input point in reported delay",
        )

    run = sub.add_parser("run", help="simulate one (design, code, seed)")
    run.add_argument("--design", choices=sorted(DESIGN_KEYS), default="baseline")
    run.add_argument("--code", default="222", help="three-digit demand code (SE, NE, SW)")
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--controlled", action="store_true",
                     help="use the shared (retargeted) schedule of controlled sweeps")
    run.add_argument("--out", default=None, help="also write the result as CSV")
    add_sim_flags(run)

    sweep = sub.add_parser("sweep", help="run a sweep spec and write results CSV")
    sweep.add_argument("--config", default=None, help="JSON sweep spec")
    sweep.add_argument("--out", required=True, help="results CSV path")
    sweep.add_argument("--jobs", type=int, default=None, help="parallel workers")
    sweep.add_argument("--controlled", dest="controlled", action="store_true", default=None)
    sweep.add_argument("--uncontrolled", dest="controlled", action="store_false")
    add_sim_flags(sweep)

    comp = sub.add_parser("compare", help="per-code delay deltas between two result CSVs")
    comp.add_argument("--baseline", required=True, help="baseline results CSV")
    comp.add_argument("--variant", required=True, help="variant results CSV")
    comp.add_argument("--baseline-design", default=None,
                      help="restrict baseline rows to one design key")
    comp.add_argument("--variant-design", default=None,
                      help="restrict variant rows to one design key")
    comp.add_argument("--lane", default="nw_middle",
                      help="lane id, or BASELANE:VARLANE for cross-lane comparison")
    comp.add_argument("--out", default=None, help="write comparison CSV here")

    val = sub.add_parser("validate", help="check a sweep config and build all designs")
    val.add_argument("--config", default=None, help="JSON sweep spec")
    return parser


def _apply_sim_flags(sim: SimConfig, args) -> SimConfig:
    changes = {}
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if args.count_pre_entry_delay is not None:
        changes["count_pre_entry_delay"] = args.count_pre_entry_delay
    return replace(sim, **changes) if changes else sim


def _cmd_run(args) -> int:
    sim = _apply_sim_flags(SimConfig(), args)
    result = experiment.run_one(
        args.design, args.code, args.seed, sim, controlled=args.controlled
    )
    print(f"design={args.design} code={result.code} seed={result.seed} "
          f"horizon={result.horizon:.0f}s accounting="
          f"{'full' if result.count_pre_entry_delay else 'network-entry'}")
    print(f"{'lane':<12}{'n':>7}{'mean_delay_s':>14}{'max_queue_ft':>14}")
    for lane_id, lm in result.lanes:
        print(f"{lane_id:<12}{lm.n:>7}{lm.mean_delay_s:>14.3f}{lm.max_queue_ft:>14.3f}")
    t = result.totals
    print(f"totals: scheduled={t.scheduled} injected={t.injected} "
          f"discharged={t.discharged} in_network={t.in_network} deferred={t.deferred}")
    print(f"controller: cycles={result.controller.cycles} "
          f"mean_cycle_s={result.controller.mean_cycle_s:.1f}")
    if args.out:
        experiment.emit_csv([result], args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    if args.config:
        spec, cfg_jobs = experiment.load_sweep_config(args.config)
    else:
        spec, cfg_jobs = SweepSpec(), None
    if args.controlled is not None:
        spec = replace(spec, controlled=args.controlled)
    spec = replace(spec, sim=_apply_sim_flags(spec.sim, args))
    jobs = args.jobs if args.jobs is not None else cfg_jobs
    results = experiment.run_sweep(spec, jobs=jobs)
    experiment.emit_csv(results, args.out)
    print(f"wrote {len(results)} runs ({len(results) * len(results[0].lanes)} lane rows) "
          f"to {args.out}")
    return 0


def _cmd_compare(args) -> int:
    base = experiment.read_csv(args.baseline)
    var = experiment.read_csv(args.variant)
    if args.baseline_design:
        base = [r for r in base if r.design == args.baseline_design]
    if args.variant_design:
        var = [r for r in var if r.design == args.variant_design]
    lane = tuple(args.lane.split(":")) if ":" in args.lane else args.lane
    if isinstance(lane, tuple) and len(lane) != 2:
        raise InvalidConfigError("--lane takes LANE or BASELANE:VARLANE")
    result = experiment.compare_csv_rows(base, var, lane)
    print(f"{'code':<6}{'baseline_s':>12}{'variant_s':>12}{'delta_s':>12}")
    for row in result.rows:
        print(f"{row.code:<6}{row.baseline_delay:>12.3f}{row.variant_delay:>12.3f}"
              f"{row.delta:>12.3f}")
    print(f"codes={result.n_codes} improved(delta<0)={result.n_negative}")
    if args.out:
        experiment.emit_comparison_csv(result, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_validate(args) -> int:
    if args.config:
        spec, jobs = experiment.load_sweep_config(args.config)
    else:
        spec, jobs = SweepSpec(), None
    for key in spec.designs:
        variant, _ = DESIGN_KEYS[key]
        build_design(variant, GeometryParams())
    print(f"config ok: {len(spec.designs)} designs x {len(spec.codes)} codes x "
          f"{len(spec.seeds)} seeds, controlled={spec.controlled}, jobs={jobs}")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_validate(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - contract maps any failure to 3
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
