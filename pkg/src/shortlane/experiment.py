"""Scenario sweep harness: batched runs, baseline comparisons, CSV reports.

A sweep runs every (design, situation code, seed) combination.  With
`controlled=True` one arrival schedule is generated per (code, seed) and
retargeted per design, so designs see identical arrival instants; otherwise
each design draws fresh arrivals.  Runs are independent and execute in
parallel; results are assembled in canonical (design, code, seed) order, so
output is byte-stable regardless of worker count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

from .demand import (
    Reassignment,
    all_codes,
    decode_scenario,
    flows_for_code,
    generate_schedule,
    retarget_schedule,
)
from .engine import RunResult, SimConfig, run_simulation
from .errors import ComparisonError, InvalidConfigError
from .network import DesignVariant, GeometryParams, build_design
from .signals import default_controller_config

# public design handles: variant plus (for the right-turn-only variant) which
# flow reassignment the displaced through traffic follows
DESIGN_KEYS: dict[str, tuple[DesignVariant, Reassignment]] = {
    "baseline": (DesignVariant.BASELINE, Reassignment.NONE),
    "extended": (DesignVariant.EXTENDED_SHORT, Reassignment.NONE),
    "rto-i": (DesignVariant.RIGHT_TURN_ONLY, Reassignment.SCENARIO_I),
    "rto-ii": (DesignVariant.RIGHT_TURN_ONLY, Reassignment.SCENARIO_II),
    "diverge": (DesignVariant.ADDED_DIVERGE, Reassignment.NONE),
}

CSV_HEADER = "design,reassignment,code,seed,lane,n_vehicles,mean_delay_s,max_queue_ft"
COMPARISON_HEADER = (
    "code,lane,baseline_mean_delay_s,variant_mean_delay_s,delta_s,"
    "baseline_max_queue_ft,variant_max_queue_ft"
)


@dataclass(frozen=True)
class SweepSpec:
    designs: tuple[str, ...] = ("baseline", "extended", "rto-i", "diverge")
    codes: tuple[str, ...] = tuple(all_codes())
    seeds: tuple[int, ...] = (1, 2, 3)
    controlled: bool = True
    sim: SimConfig = SimConfig()
    deterministic_headways: bool = False

    def __post_init__(self) -> None:
        if not self.designs or not self.codes or not self.seeds:
            raise InvalidConfigError("sweep needs at least one design, code and seed")
        for key in self.designs:
            if key not in DESIGN_KEYS:
                raise InvalidConfigError(
                    f"unknown design {key!r}; expected one of {sorted(DESIGN_KEYS)}"
                )
        for code in self.codes:
            decode_scenario(code)


def run_one(
    design_key: str,
    code: str,
    seed: int,
    sim: SimConfig = SimConfig(),
    controlled: bool = True,
    deterministic_headways: bool = False,
    geometry: GeometryParams = GeometryParams(),
) -> RunResult:
    """Build and execute a single (design, code, seed) run."""
    variant, reassignment = DESIGN_KEYS[design_key]
    design = build_design(variant, geometry)
    salt = 0 if controlled else 1 + sorted(DESIGN_KEYS).index(design_key)
    base = generate_schedule(
        flows_for_code(code), seed, sim.horizon,
        deterministic_headways=deterministic_headways, stream_salt=salt,
    )
    schedule = retarget_schedule(base, variant, reassignment)
    return run_simulation(
        design, default_controller_config(), schedule, sim,
        reassignment=reassignment, code=code,
    )


def _run_task(task) -> RunResult:
    design_key, code, seed, sim, controlled, det = task
    try:
        return run_one(design_key, code, seed, sim, controlled, det)
    except Exception as exc:
        raise RuntimeError(f"run failed for ({design_key}, {code}, seed {seed}): {exc}") from exc


def run_sweep(spec: SweepSpec, jobs: Optional[int] = None) -> list[RunResult]:
    """All runs of a sweep in canonical (design, code, seed) order."""
    tasks = [
        (design, code, seed, spec.sim, spec.controlled, spec.deterministic_headways)
        for design in spec.designs
        for code in spec.codes
        for seed in spec.seeds
    ]
    if jobs is None:
        jobs = os.cpu_count() or 1
    jobs = max(1, min(jobs, len(tasks)))
    if jobs == 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks, chunksize=4))


@dataclass(frozen=True)
class ComparisonRow:
    code: str
    lane: str
    baseline_delay: float
    variant_delay: float
    delta: float
    baseline_max_queue: float
    variant_max_queue: float


@dataclass(frozen=True)
class CompareResult:
    rows: tuple[ComparisonRow, ...]
    n_codes: int
    n_negative: int  # codes where the variant lowered the delay


def _delay_of(metrics, accounting: Optional[str]) -> float:
    if accounting is None:
        return metrics.mean_delay_s
    if accounting == "vissim":
        return metrics.mean_delay_vissim_s
    if accounting == "full":
        return metrics.mean_delay_full_s
    raise InvalidConfigError(f"unknown accounting {accounting!r}")


def _grouped(results: Sequence[RunResult]) -> dict[str, list[RunResult]]:
    by_code: dict[str, list[RunResult]] = {}
    for r in results:
        by_code.setdefault(r.code, []).append(r)
    return by_code


def compare(
    baseline: Sequence[RunResult],
    variant: Sequence[RunResult],
    lane: Union[str, tuple[str, str]],
    accounting: Optional[str] = None,
) -> CompareResult:
    """Per-code delay deltas (variant minus baseline), averaged over seeds.

    `lane` may be a single lane id or a (baseline lane, variant lane) pair for
    cross-lane comparisons such as bypass lane versus original short lane.
    """
    b_lane, v_lane = (lane, lane) if isinstance(lane, str) else lane
    base_keys = {(r.code, r.seed) for r in baseline}
    var_keys = {(r.code, r.seed) for r in variant}
    if base_keys != var_keys:
        raise ComparisonError("baseline and variant cover different (code, seed) grids")

    by_code_b = _grouped(baseline)
    by_code_v = _grouped(variant)
    rows = []
    for code in sorted(by_code_b):
        bs = by_code_b[code]
        vs = by_code_v[code]
        b_delay = sum(_delay_of(r.lane_metrics(b_lane), accounting) for r in bs) / len(bs)
        v_delay = sum(_delay_of(r.lane_metrics(v_lane), accounting) for r in vs) / len(vs)
        b_q = sum(r.lane_metrics(b_lane).max_queue_ft for r in bs) / len(bs)
        v_q = sum(r.lane_metrics(v_lane).max_queue_ft for r in vs) / len(vs)
        rows.append(
            ComparisonRow(
                code=code,
                lane=b_lane if b_lane == v_lane else f"{b_lane}->{v_lane}",
                baseline_delay=b_delay,
                variant_delay=v_delay,
                delta=v_delay - b_delay,
                baseline_max_queue=b_q,
                variant_max_queue=v_q,
            )
        )
    n_negative = sum(1 for row in rows if row.delta < 0)
    return CompareResult(rows=tuple(rows), n_codes=len(rows), n_negative=n_negative)


# -- CSV -------------------------------------------------------------------


def emit_csv(results: Sequence[RunResult], path: Union[str, Path]) -> None:
    """One row per (run, lane); numbers at three decimals, newline-terminated."""
    key_of = {(v, r): k for k, (v, r) in DESIGN_KEYS.items()}
    with open(path, "w", newline="") as fp:
        fp.write(CSV_HEADER + "\n")
        for res in results:
            design_key = key_of[(res.design, res.reassignment)]
            for lane_id, lm in res.lanes:
                fp.write(
                    f"{design_key},{res.reassignment.value},{res.code},{res.seed},"
                    f"{lane_id},{lm.n},{lm.mean_delay_s:.3f},{lm.max_queue_ft:.3f}\n"
                )


@dataclass(frozen=True)
class CsvLaneRow:
    design: str
    reassignment: str
    code: str
    seed: int
    lane: str
    n_vehicles: int
    mean_delay_s: float
    max_queue_ft: float


def read_csv(path: Union[str, Path]) -> list[CsvLaneRow]:
    with open(path, "r", newline="") as fp:
        header = fp.readline().strip()
        if header != CSV_HEADER:
            raise InvalidConfigError(f"unexpected results header in {path}")
        rows = []
        for line in fp:
            design, reassignment, code, seed, lane, n, delay, queue = line.strip().split(",")
            rows.append(
                CsvLaneRow(design, reassignment, code, int(seed), lane, int(n),
                           float(delay), float(queue))
            )
    return rows


def compare_csv_rows(
    baseline: Sequence[CsvLaneRow], variant: Sequence[CsvLaneRow],
    lane: Union[str, tuple[str, str]],
) -> CompareResult:
    """compare() over previously exported result rows."""
    b_lane, v_lane = (lane, lane) if isinstance(lane, str) else lane
    base = [r for r in baseline if r.lane == b_lane]
    var = [r for r in variant if r.lane == v_lane]
    if {(r.code, r.seed) for r in base} != {(r.code, r.seed) for r in var}:
        raise ComparisonError("baseline and variant cover different (code, seed) grids")
    rows = []
    codes = sorted({r.code for r in base})
    for code in codes:
        bs = [r for r in base if r.code == code]
        vs = [r for r in var if r.code == code]
        b_delay = sum(r.mean_delay_s for r in bs) / len(bs)
        v_delay = sum(r.mean_delay_s for r in vs) / len(vs)
        rows.append(
            ComparisonRow(
                code=code,
                lane=b_lane if b_lane == v_lane else f"{b_lane}->{v_lane}",
                baseline_delay=b_delay,
                variant_delay=v_delay,
                delta=v_delay - b_delay,
                baseline_max_queue=sum(r.max_queue_ft for r in bs) / len(bs),
                variant_max_queue=sum(r.max_queue_ft for r in vs) / len(vs),
            )
        )
    n_negative = sum(1 for row in rows if row.delta < 0)
    return CompareResult(rows=tuple(rows), n_codes=len(rows), n_negative=n_negative)


def emit_comparison_csv(result: CompareResult, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fp:
        fp.write(COMPARISON_HEADER + "\n")
        for row in result.rows:
            fp.write(
                f"{row.code},{row.lane},{row.baseline_delay:.3f},{row.variant_delay:.3f},"
                f"{row.delta:.3f},{row.baseline_max_queue:.3f},{row.variant_max_queue:.3f}\n"
            )


# -- JSON sweep config -------------------------------------------------------

_CONFIG_KEYS = {
    "designs", "codes", "seeds", "controlled", "dt", "horizon", "warmup",
    "count_pre_entry_delay", "deterministic_headways", "jobs",
}


def load_sweep_config(path: Union[str, Path]) -> tuple[SweepSpec, Optional[int]]:
    """Read a sweep spec from JSON; returns (spec, jobs)."""
    try:
        with open(path) as fp:
            doc = json.load(fp)
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"bad JSON in {path}: {exc}") from exc
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
    sim = SimConfig(
        dt=float(doc.get("dt", 0.1)),
        horizon=float(doc.get("horizon", 3600.0)),
        warmup=float(doc.get("warmup", 0.0)),
        count_pre_entry_delay=bool(doc.get("count_pre_entry_delay", False)),
    )
    spec = SweepSpec(
        designs=tuple(doc.get("designs", ("baseline", "extended", "rto-i", "diverge"))),
        codes=tuple(doc.get("codes", all_codes())),
        seeds=tuple(int(s) for s in doc.get("seeds", (1, 2, 3))),
        controlled=bool(doc.get("controlled", True)),
        sim=sim,
        deterministic_headways=bool(doc.get("deterministic_headways", False)),
    )
    jobs = doc.get("jobs")
    return spec, (int(jobs) if jobs is not None else None)


def override_sim(spec: SweepSpec, **changes) -> SweepSpec:
    """Copy of `spec` with SimConfig fields replaced (CLI overrides)."""
    return replace(spec, sim=replace(spec.sim, **changes))
