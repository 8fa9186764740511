"""Vehicle dynamics: car following, diverge transfer, gap acceptance, detectors.

Vehicles are treated as points at their front bumper; spacing is measured
front to front, so the jam spacing (22.4 ft) is the full footprint of one
stored vehicle.  The car-following law is the Intelligent Driver Model

    acc = a * (1 - (v/v0)^4 - (s*/s)^2),   s* = s0 + max(0, v*T + v*dv/(2*sqrt(a*b)))

where s is the front-to-front gap to the binding constraint and dv the
closing speed.  A red signal acts as a standing virtual leader one jam
spacing beyond the stop bar, which parks the head vehicle exactly at the bar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from . import signals
from .errors import InvalidStepError
from .network import Entrance, IntersectionDesign, Movement

INF_GAP = 1.0e12


class VehicleState(str, Enum):
    APPROACHING = "APPROACHING"
    QUEUED = "QUEUED"
    STOPPED_AT_SIGN = "STOPPED_AT_SIGN"
    DISCHARGED = "DISCHARGED"


@dataclass
class Vehicle:
    id: int
    entrance: Entrance
    movement: Movement
    lane: str
    target_lane: str
    position: float  # feet upstream of the lane's stop point, decreasing
    speed: float
    arrival_time: float
    section_entry_time: Optional[float] = None
    state: VehicleState = VehicleState.APPROACHING


@dataclass(frozen=True)
class CarFollowingParams:
    v0: float = 50.0  # desired speed, ft/s
    a: float = 6.0  # max acceleration, ft/s^2
    b: float = 9.0  # comfortable deceleration, ft/s^2
    s0: float = 22.4  # jam spacing (front to front), ft
    T: float = 1.2  # time headway, s


@dataclass(frozen=True)
class GapAcceptanceParams:
    critical_gap: float = 6.0  # s
    require_full_stop: bool = True
    full_stop_speed: float = 0.5  # ft/s; below this counts as stopped


class DivergeOutcome(str, Enum):
    TRANSFERRED = "TRANSFERRED"
    BLOCKED = "BLOCKED"


class GapDecision(str, Enum):
    PROCEED = "PROCEED"
    WAIT = "WAIT"


def idm_acceleration(
    speed: float, gap: float, closing_speed: float, params: CarFollowingParams
) -> float:
    """IDM acceleration toward one constraint; gap is front-to-front."""
    if gap <= 0.05:
        return -INF_GAP
    dyn = speed * params.T + speed * closing_speed / (2.0 * math.sqrt(params.a * params.b))
    s_star = params.s0 + max(0.0, dyn)
    free = (speed / params.v0) ** 4
    return params.a * (1.0 - free - (s_star / gap) ** 2)


def follow_update(
    vehicle: Vehicle,
    leader_gap: float,
    leader_speed: float,
    signal_ahead: Optional[tuple[str, float]],
    params: CarFollowingParams,
    dt: float,
) -> tuple[float, float]:
    """One integration step for a single vehicle; returns (speed, position).

    `leader_gap` is the front-to-front distance to the physical leader (use a
    large value for an open road).  `signal_ahead` is (indication, distance to
    the stop bar) or None; red and stop-controlled indications become a
    standing leader at the bar, yellow does so only when stopping needs no
    more than the comfortable deceleration.  Integration is semi-implicit
    Euler with the new speed clamped to [0, v0].  The jam spacing acts as an
    impenetrable shell: the advance is clamped so no gap drops below s0, which
    parks a stopping head exactly at the bar and packs standing queues at
    exactly one footprint per vehicle.
    """
    if dt <= 0:
        raise InvalidStepError(f"dt must be positive, got {dt}")
    v = vehicle.speed

    candidates = [(leader_gap, v - leader_speed)]
    if signal_ahead is not None:
        color, distance = signal_ahead
        stops = color in (signals.RED, signals.STOP_CONTROLLED)
        if color == signals.YELLOW and distance >= 0:
            stops = v * v <= 2.0 * params.b * distance
        if stops and distance >= 0:
            candidates.append((distance + params.s0, v))

    acc = params.a * (1.0 - (v / params.v0) ** 4)
    max_advance = INF_GAP
    for gap, dv in candidates:
        if gap >= INF_GAP:
            continue
        max_advance = min(max_advance, gap - params.s0)
        one = idm_acceleration(v, gap, dv, params)
        if one < acc:
            acc = one

    new_speed = min(params.v0, max(0.0, v + acc * dt))
    advance = new_speed * dt
    if advance > max_advance:
        advance = max(0.0, max_advance)
        new_speed = advance / dt
    return new_speed, vehicle.position - advance


def diverge_attempt(occupancy: int, capacity: int) -> DivergeOutcome:
    """Whether a vehicle at the diverge point may enter the turn-bay lane.

    Blocked vehicles halt in the middle lane at the diverge point and become a
    spillback obstruction for the through traffic behind them.
    """
    return DivergeOutcome.TRANSFERRED if occupancy < capacity else DivergeOutcome.BLOCKED


def gap_accept(
    speed: float,
    conflicting_arrival_times: Iterable[float],
    params: GapAcceptanceParams = GapAcceptanceParams(),
) -> GapDecision:
    """Stop-sign / right-on-red decision against projected conflict arrivals."""
    if params.require_full_stop and speed > params.full_stop_speed:
        raise ValueError(
            f"gap acceptance requires a full stop; vehicle still moving at {speed:.2f} ft/s"
        )
    nearest = min(conflicting_arrival_times, default=math.inf)
    return GapDecision.PROCEED if nearest >= params.critical_gap else GapDecision.WAIT


def detector_scan(design: IntersectionDesign, vehicles: Iterable[Vehicle]) -> set[int]:
    """Phases actuated by vehicles standing or driving inside a detection zone.

    A phase is called when a vehicle whose movement it controls occupies the
    stop-bar presence detector of its current lane (stop bar to 40 ft
    upstream by default).
    """
    zone = design.detection_zone_ft
    actuated: set[int] = set()
    for veh in vehicles:
        if not (0.0 <= veh.position <= zone):
            continue
        lane = design.lane(veh.lane)
        rule = design.movement_map.get((lane.entrance, veh.movement))
        if rule is not None and rule.control.phase is not None:
            actuated.add(rule.control.phase)
    return actuated


@dataclass
class TrajectoryRecorder:
    """Optional per-step trajectory dump (debugging aid, off by default)."""

    rows: list[tuple[float, int, str, float, float]] = field(default_factory=list)

    def record(self, t: float, vehicle_id: int, lane: str, position: float, speed: float) -> None:
        self.rows.append((t, vehicle_id, lane, position, speed))

    def write_csv(self, fp) -> None:
        fp.write("time_s,vehicle_id,lane,position_ft,speed_ft_s\n")
        for t, vid, lane, pos, speed in self.rows:
            fp.write(f"{t:.1f},{vid},{lane},{pos:.2f},{speed:.2f}\n")
