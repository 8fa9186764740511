"""Demand encoding and arrival-schedule generation.

Demand is described by per-lane flows on the NW approach (left / middle /
short, in pcu/h) plus one aggregate flow per other entrance.  The three
non-NW entrances each take one of three levels (high / medium / low), giving
27 demand situations named by a three-digit code ordered (SE, NE, SW) with
1 = high, 2 = medium, 3 = low.

Schedules are lists of timed arrival events.  Generation draws independent
Poisson streams per (entrance, lane) and is bit-reproducible for a fixed
seed, so the same arrivals can be replayed across design variants
(`retarget_schedule`) for controlled comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, TextIO

import numpy as np

from .errors import InvalidCodeError, InvalidConfigError
from .network import DesignVariant, Entrance, Movement

NW_LANE_FLOWS = (401.0, 343.0, 836.0)  # left, middle, short (pcu/h)
NW_SHORT_RIGHT_FRACTION = 0.10
SE_LEVELS = {1: 1500.0, 2: 1000.0, 3: 500.0}
NE_SW_LEVELS = {1: 1000.0, 2: 600.0, 3: 200.0}


class Reassignment(str, Enum):
    NONE = "NONE"
    SCENARIO_I = "SCENARIO_I"
    SCENARIO_II = "SCENARIO_II"


class LaneIntent(str, Enum):
    LEFT = "LEFT"
    MIDDLE = "MIDDLE"
    SHORT = "SHORT"
    AUTO = "AUTO"


@dataclass(frozen=True)
class CrossFlows:
    se: float
    ne: float
    sw: float


@dataclass(frozen=True)
class NWLaneFlows:
    left: float
    mid: float
    short: float

    @property
    def total(self) -> float:
        return self.left + self.mid + self.short


@dataclass(frozen=True)
class EntranceFlows:
    """Complete demand description for one situation."""

    nw: NWLaneFlows = NWLaneFlows(*NW_LANE_FLOWS)
    nw_short_right_fraction: float = NW_SHORT_RIGHT_FRACTION
    cross: CrossFlows = CrossFlows(0.0, 0.0, 0.0)
    # equal left/through/right split at the three assumed entrances
    cross_left_fraction: float = 1.0 / 3.0
    cross_right_fraction: float = 1.0 / 3.0


@dataclass(frozen=True)
class ArrivalEvent:
    time: float
    entrance: Entrance
    movement: Movement
    lane_intent: LaneIntent


@dataclass(frozen=True)
class ArrivalSchedule:
    seed: int
    horizon: float
    events: tuple[ArrivalEvent, ...]

    def to_csv(self, fp: TextIO) -> None:
        fp.write("time_s,entrance,movement,lane_intent\n")
        for ev in self.events:
            fp.write(
                f"{ev.time:.6f},{ev.entrance.value},{ev.movement.value},{ev.lane_intent.value}\n"
            )

    @staticmethod
    def from_csv(fp: TextIO, seed: int = 0, horizon: float = 0.0) -> "ArrivalSchedule":
        header = fp.readline()
        if header.strip() != "time_s,entrance,movement,lane_intent":
            raise InvalidConfigError("unrecognized schedule CSV header")
        events = []
        for line in fp:
            t, ent, mov, intent = line.strip().split(",")
            events.append(
                ArrivalEvent(float(t), Entrance(ent), Movement(mov), LaneIntent(intent))
            )
        return ArrivalSchedule(seed=seed, horizon=horizon, events=tuple(events))


def decode_scenario(code: str) -> CrossFlows:
    """Map a three-digit situation code to (SE, NE, SW) flows in pcu/h."""
    if not isinstance(code, str) or len(code) != 3 or not code.isdigit():
        raise InvalidCodeError(f"scenario code must be three digits of 1-3, got {code!r}")
    digits = [int(c) for c in code]
    if any(d not in (1, 2, 3) for d in digits):
        raise InvalidCodeError(f"scenario digits must be in 1..3, got {code!r}")
    return CrossFlows(
        se=SE_LEVELS[digits[0]], ne=NE_SW_LEVELS[digits[1]], sw=NE_SW_LEVELS[digits[2]]
    )


def encode_scenario(flows: CrossFlows) -> str:
    """Inverse of decode_scenario for valid level triples."""
    try:
        se = next(k for k, v in SE_LEVELS.items() if v == flows.se)
        ne = next(k for k, v in NE_SW_LEVELS.items() if v == flows.ne)
        sw = next(k for k, v in NE_SW_LEVELS.items() if v == flows.sw)
    except StopIteration:
        raise InvalidCodeError(f"flows {flows} do not match any demand level")
    return f"{se}{ne}{sw}"


def all_codes() -> list[str]:
    return [f"{a}{b}{c}" for a in (1, 2, 3) for b in (1, 2, 3) for c in (1, 2, 3)]


def nw_flows(variant: DesignVariant, reassignment: Reassignment = Reassignment.NONE) -> NWLaneFlows:
    """Per-lane NW flows for a design variant, including the right-turn-only
    reassignments (I: displaced through traffic moves to the middle lane;
    II: the original middle-lane traffic additionally moves to the left lane).
    """
    base_left, base_mid, base_short = NW_LANE_FLOWS
    moved = round(NW_LANE_FLOWS[2] * (1.0 - NW_SHORT_RIGHT_FRACTION))  # 752
    stays = round(NW_LANE_FLOWS[2] * NW_SHORT_RIGHT_FRACTION)  # 84
    if variant is DesignVariant.RIGHT_TURN_ONLY:
        if reassignment is Reassignment.SCENARIO_I:
            return NWLaneFlows(base_left, base_mid + moved, float(stays))
        if reassignment is Reassignment.SCENARIO_II:
            return NWLaneFlows(base_left + base_mid, float(moved), float(stays))
        raise InvalidConfigError("RIGHT_TURN_ONLY requires a SCENARIO_I or SCENARIO_II reassignment")
    if reassignment is not Reassignment.NONE:
        raise InvalidConfigError(f"reassignment {reassignment.value} only applies to RIGHT_TURN_ONLY")
    return NWLaneFlows(base_left, base_mid, base_short)


def flows_for_code(code: str) -> EntranceFlows:
    """Baseline NW lane split plus the cross flows of one situation code."""
    return EntranceFlows(cross=decode_scenario(code))


# fixed stream order keeps generation reproducible
_STREAMS = ("nw_left", "nw_middle", "nw_short", "se", "ne", "sw")


def _stream_events(
    stream: str,
    rate: float,
    flows: EntranceFlows,
    seed: int,
    horizon: float,
    deterministic: bool,
    salt: int,
) -> list[ArrivalEvent]:
    if rate <= 0:
        return []
    idx = _STREAMS.index(stream)
    rng = np.random.default_rng([seed & 0x7FFFFFFFFFFFFFFF, salt, idx])
    headway = 3600.0 / rate

    if deterministic:
        count = int(round(rate * horizon / 3600.0))
        times = [(k + 0.5) * horizon / count for k in range(count)]
    else:
        times = []
        t = rng.exponential(headway)
        while t < horizon:
            times.append(t)
            t += rng.exponential(headway)

    events = []
    for k, t in enumerate(times):
        if stream == "nw_left":
            ent, mov, intent = Entrance.NW, Movement.THROUGH, LaneIntent.LEFT
        elif stream == "nw_middle":
            ent, mov, intent = Entrance.NW, Movement.THROUGH, LaneIntent.MIDDLE
        elif stream == "nw_short":
            ent, intent = Entrance.NW, LaneIntent.SHORT
            if deterministic:
                period = max(1, int(round(1.0 / flows.nw_short_right_fraction)))
                right = k % period == 0
            else:
                right = rng.random() < flows.nw_short_right_fraction
            mov = Movement.RIGHT_TURN if right else Movement.THROUGH
        else:
            ent = {"se": Entrance.SE, "ne": Entrance.NE, "sw": Entrance.SW}[stream]
            intent = LaneIntent.AUTO
            if deterministic:
                mov = (Movement.LEFT_TURN, Movement.THROUGH, Movement.RIGHT_TURN)[k % 3]
            else:
                u = rng.random()
                if u < flows.cross_left_fraction:
                    mov = Movement.LEFT_TURN
                elif u < flows.cross_left_fraction + flows.cross_right_fraction:
                    mov = Movement.RIGHT_TURN
                else:
                    mov = Movement.THROUGH
        events.append(ArrivalEvent(time=float(t), entrance=ent, movement=mov, lane_intent=intent))
    return events


def generate_schedule(
    flows: EntranceFlows,
    seed: int,
    horizon: float,
    deterministic_headways: bool = False,
    stream_salt: int = 0,
) -> ArrivalSchedule:
    """Independent arrival streams per (entrance, lane), merged in time order.

    Poisson by default (exponential headways); `deterministic_headways`
    switches to evenly spaced rate-exact arrivals for low-variance tests.
    `stream_salt` decorrelates draws without changing the reported seed
    (used for uncontrolled sweeps, where each design gets fresh arrivals).
    """
    if horizon <= 0:
        raise InvalidConfigError(f"horizon must be positive, got {horizon}")
    rates = {
        "nw_left": flows.nw.left,
        "nw_middle": flows.nw.mid,
        "nw_short": flows.nw.short,
        "se": flows.cross.se,
        "ne": flows.cross.ne,
        "sw": flows.cross.sw,
    }
    if any(r < 0 for r in rates.values()):
        raise InvalidConfigError("flows must be non-negative")

    keyed: list[tuple[float, int, int, ArrivalEvent]] = []
    for si, stream in enumerate(_STREAMS):
        evs = _stream_events(
            stream, rates[stream], flows, seed, horizon, deterministic_headways, stream_salt
        )
        keyed.extend((ev.time, si, k, ev) for k, ev in enumerate(evs))
    keyed.sort(key=lambda item: item[:3])
    return ArrivalSchedule(seed=seed, horizon=horizon, events=tuple(item[3] for item in keyed))


def retarget_schedule(
    schedule: ArrivalSchedule,
    variant: DesignVariant,
    reassignment: Reassignment = Reassignment.NONE,
) -> ArrivalSchedule:
    """Remap lane intents of a baseline-split schedule for a design variant.

    Event count and every arrival instant are preserved, which is what makes
    cross-design comparisons controlled.  For the right-turn-only variant the
    displaced through traffic moves per the chosen reassignment; the other
    variants leave intents unchanged (the added diverge lane is resolved from
    movement at injection time).
    """
    nw_flows(variant, reassignment)  # validates the pair
    if variant is not DesignVariant.RIGHT_TURN_ONLY:
        return replace(schedule, events=schedule.events)

    events = []
    for ev in schedule.events:
        intent = ev.lane_intent
        if intent is LaneIntent.SHORT and ev.movement is Movement.THROUGH:
            intent = LaneIntent.MIDDLE
        elif reassignment is Reassignment.SCENARIO_II and intent is LaneIntent.MIDDLE:
            intent = LaneIntent.LEFT
        events.append(ev if intent is ev.lane_intent else replace(ev, lane_intent=intent))
    return replace(schedule, events=tuple(events))


def expected_event_count(flows: EntranceFlows, horizon: float) -> float:
    total_rate = flows.nw.total + flows.cross.se + flows.cross.ne + flows.cross.sw
    return total_rate * horizon / 3600.0


def merge_sorted(events: Iterable[ArrivalEvent]) -> bool:
    """True when event times are non-decreasing (schedule invariant)."""
    prev = -math.inf
    for ev in events:
        if ev.time < prev:
            return False
        prev = ev.time
    return True
