"""Deterministic actuated signal controller.

Single-ring split phasing: the five phases run in fixed cycle order, each
serving one movement group exclusively.  Green holds for at least the minimum
green, is extended while detector actuations arrive within the vehicle
extension gap, terminates at the maximum green regardless (max-out), and is
followed by exact yellow and red-clearance intervals.  Every phase carries a
minimum recall, so each is served once per cycle even with no demand.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, TextIO

from .errors import InvalidConfigError, InvalidStepError
from .network import Entrance, IntersectionDesign, Movement

GREEN = "GREEN"
YELLOW = "YELLOW"
RED = "RED"
STOP_CONTROLLED = "STOP_CONTROLLED"


class Interval(str, Enum):
    GREEN = "GREEN"
    YELLOW = "YELLOW"
    RED_CLEAR = "RED_CLEAR"


@dataclass(frozen=True)
class PhaseConfig:
    phase_id: int
    min_green: float
    max_green: float
    yellow: float
    red_clearance: float
    vehicle_extension: float
    minimum_recall: bool
    served_movements: frozenset[tuple[Entrance, Movement]]

    def __post_init__(self) -> None:
        if not (0 < self.min_green <= self.max_green):
            raise InvalidConfigError(f"phase {self.phase_id}: bad green bounds")
        if self.yellow <= 0 or self.red_clearance < 0 or self.vehicle_extension <= 0:
            raise InvalidConfigError(f"phase {self.phase_id}: bad change/extension intervals")


@dataclass(frozen=True)
class ControllerConfig:
    phases: tuple[PhaseConfig, ...]

    def __post_init__(self) -> None:
        ids = [p.phase_id for p in self.phases]
        if len(set(ids)) != len(ids) or not ids:
            raise InvalidConfigError("phases must be non-empty with unique ids")
        served: list[tuple[Entrance, Movement]] = []
        for p in self.phases:
            served.extend(p.served_movements)
        if len(served) != len(set(served)):
            raise InvalidConfigError("served movements must partition across phases")

    def phase(self, phase_id: int) -> PhaseConfig:
        for p in self.phases:
            if p.phase_id == phase_id:
                return p
        raise KeyError(phase_id)


@dataclass
class ControllerState:
    active_phase: int
    interval: Interval = Interval.GREEN
    interval_elapsed: float = 0.0
    time_since_last_actuation: float = 0.0
    pending_calls: set[int] = field(default_factory=set)


@dataclass(frozen=True)
class Indication:
    """Signal heads for one step: the active phase's color, everything else red."""

    active_phase: int
    interval: Interval

    def signal_for(self, phase_id: Optional[int]) -> str:
        if phase_id is None or phase_id != self.active_phase:
            return RED
        if self.interval is Interval.GREEN:
            return GREEN
        if self.interval is Interval.YELLOW:
            return YELLOW
        return RED


def default_controller_config() -> ControllerConfig:
    """Field-observed timings for the studied intersection.

    Phases 1-2 release the cross-street approaches (NE, SW) with a 2 s vehicle
    extension; phases 3-5 release the main-street approaches (SE left, SE
    through, NW through) with a 3 s extension.  All phases run minimum recall.
    """
    mins = (5.0, 5.0, 10.0, 20.0, 20.0)
    maxs = (10.0, 10.0, 15.0, 30.0, 30.0)
    extensions = (2.0, 2.0, 3.0, 3.0, 3.0)
    served: tuple[frozenset[tuple[Entrance, Movement]], ...] = (
        frozenset(
            {
                (Entrance.NE, Movement.LEFT_TURN),
                (Entrance.NE, Movement.THROUGH),
                (Entrance.NE, Movement.RIGHT_TURN),
            }
        ),
        frozenset(
            {
                (Entrance.SW, Movement.LEFT_TURN),
                (Entrance.SW, Movement.THROUGH),
                (Entrance.SW, Movement.RIGHT_TURN),
            }
        ),
        frozenset({(Entrance.SE, Movement.LEFT_TURN)}),
        frozenset({(Entrance.SE, Movement.THROUGH), (Entrance.SE, Movement.RIGHT_TURN)}),
        frozenset({(Entrance.NW, Movement.THROUGH), (Entrance.NW, Movement.RIGHT_TURN)}),
    )
    return ControllerConfig(
        phases=tuple(
            PhaseConfig(
                phase_id=i + 1,
                min_green=mins[i],
                max_green=maxs[i],
                yellow=3.0,
                red_clearance=1.0,
                vehicle_extension=extensions[i],
                minimum_recall=True,
                served_movements=served[i],
            )
            for i in range(5)
        )
    )


def initial_state(config: ControllerConfig) -> ControllerState:
    first = config.phases[0].phase_id
    calls = {p.phase_id for p in config.phases if p.minimum_recall and p.phase_id != first}
    return ControllerState(active_phase=first, pending_calls=calls)


def _next_called(config: ControllerConfig, state: ControllerState) -> int:
    order = [p.phase_id for p in config.phases]
    i = order.index(state.active_phase)
    for k in range(1, len(order) + 1):
        candidate = order[(i + k) % len(order)]
        if candidate in state.pending_calls:
            return candidate
    return state.active_phase  # no calls anywhere: rest in place


def controller_step(
    config: ControllerConfig,
    state: ControllerState,
    dt: float,
    actuations: Iterable[int] = (),
) -> tuple[ControllerState, Indication]:
    """Advance the controller by one step of `dt` seconds.

    `actuations` are the phases whose detectors are occupied at the step start.
    Interval comparisons use a dt/2 tolerance so accumulated float error cannot
    shift a transition by a step.
    """
    if dt <= 0:
        raise InvalidStepError(f"dt must be positive, got {dt}")
    eps = dt / 2.0
    s = copy.copy(state)
    s.pending_calls = set(state.pending_calls)

    actuated = set(actuations)
    s.pending_calls |= actuated - {s.active_phase}
    for p in config.phases:
        if p.minimum_recall and p.phase_id != s.active_phase:
            s.pending_calls.add(p.phase_id)

    if s.active_phase in actuated:
        s.time_since_last_actuation = 0.0

    s.interval_elapsed += dt
    s.time_since_last_actuation += dt

    phase = config.phase(s.active_phase)
    if s.interval is Interval.GREEN:
        maxed = s.interval_elapsed >= phase.max_green - eps
        gapped = (
            s.interval_elapsed >= phase.min_green - eps
            and s.time_since_last_actuation >= phase.vehicle_extension - eps
        )
        if maxed or gapped:
            s.interval = Interval.YELLOW
            s.interval_elapsed = 0.0
    elif s.interval is Interval.YELLOW:
        if s.interval_elapsed >= phase.yellow - eps:
            s.interval = Interval.RED_CLEAR
            s.interval_elapsed = 0.0
    else:  # RED_CLEAR
        if s.interval_elapsed >= phase.red_clearance - eps:
            nxt = _next_called(config, s)
            s.pending_calls.discard(nxt)
            s.active_phase = nxt
            s.interval = Interval.GREEN
            s.interval_elapsed = 0.0
            s.time_since_last_actuation = 0.0

    return s, Indication(active_phase=s.active_phase, interval=s.interval)


def indication_for(
    design: IntersectionDesign,
    lane_id: str,
    movement: Movement,
    indication: Indication,
) -> str:
    """Signal state a vehicle with `movement` sees at the head of `lane_id`.

    Stop-sign movements (right turns released on red from the short lane, and
    the diverge lane, which bypasses the signal) report STOP_CONTROLLED
    whenever their signal would otherwise show red.
    """
    lane = design.lane(lane_id)  # raises KeyError for unknown lanes
    rule = design.movement_map.get((lane.entrance, movement))
    if rule is None or lane_id not in rule.lanes:
        raise IllegalMovementError(
            f"movement {movement.value} is not served from lane {lane_id}"
        )
    color = indication.signal_for(rule.control.phase)
    if rule.control.stop_sign is not None and color == RED:
        return STOP_CONTROLLED
    return color


def write_trace_csv(rows: Iterable[tuple[float, int, Interval]], fp: TextIO) -> None:
    """Controller trace rows (time, active phase, interval) as CSV."""
    fp.write("time_s,active_phase,interval\n")
    for t, phase, interval in rows:
        fp.write(f"{t:.1f},{phase},{interval.value}\n")
