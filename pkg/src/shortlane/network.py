"""Intersection geometry as a lane/link graph.

The approach of interest runs NW -> SE and carries three receiving lanes at
the stop bar: a full-length left lane, a full-length middle lane, and a short
lane that begins partway up the approach and is shared by through and
right-turning traffic.  Vehicles bound for the short lane travel in the middle
lane until the diverge offset and transfer there if the short lane has space;
a full short lane therefore spills back and obstructs middle-lane through
traffic.  Four design variants of this layout are supported.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import IllegalMovementError, InvalidGeometryError

JAM_SPACING_FT = 22.4
APPROACH_LENGTH_FT = 1500.0
SHORT_LANE_FT = 212.24
EXTENDED_SHORT_LANE_FT = 313.71
DETECTION_ZONE_FT = 40.0


class Entrance(str, Enum):
    NW = "NW"
    NE = "NE"
    SW = "SW"
    SE = "SE"
    INTERNAL = "INTERNAL"


class Movement(str, Enum):
    LEFT_TURN = "LEFT_TURN"
    THROUGH = "THROUGH"
    RIGHT_TURN = "RIGHT_TURN"


class LaneRole(str, Enum):
    LEFT = "LEFT"
    MIDDLE = "MIDDLE"
    SHORT = "SHORT"
    DIVERGE = "DIVERGE"
    GENERIC = "GENERIC"


class DesignVariant(str, Enum):
    BASELINE = "BASELINE"
    EXTENDED_SHORT = "EXTENDED_SHORT"
    RIGHT_TURN_ONLY = "RIGHT_TURN_ONLY"
    ADDED_DIVERGE = "ADDED_DIVERGE"


def storage_capacity(length_ft: float, jam_spacing_ft: float = JAM_SPACING_FT) -> int:
    """Whole vehicles a lane of `length_ft` can store at jam spacing."""
    if length_ft <= 0 or jam_spacing_ft <= 0:
        raise InvalidGeometryError(
            f"length and jam spacing must be positive, got {length_ft}, {jam_spacing_ft}"
        )
    return int(math.floor(length_ft / jam_spacing_ft))


@dataclass(frozen=True)
class LaneSegment:
    """One lane of the network, positions measured in feet upstream of its stop point."""

    id: str
    entrance: Entrance
    role: LaneRole
    length: float
    upstream_offset: float
    storage: int
    allowed_movements: frozenset[Movement]

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise InvalidGeometryError(f"lane {self.id}: non-positive length {self.length}")
        if self.role in (LaneRole.SHORT, LaneRole.DIVERGE) and self.upstream_offset != self.length:
            raise InvalidGeometryError(
                f"lane {self.id}: a short/diverge lane must end at its stop point "
                f"(upstream_offset {self.upstream_offset} != length {self.length})"
            )


@dataclass(frozen=True)
class MovementControl:
    """How a movement is released: a signal phase, a stop sign, or both (RTOR)."""

    phase: Optional[int] = None
    stop_sign: Optional[str] = None


@dataclass(frozen=True)
class MovementRule:
    lanes: tuple[str, ...]
    control: MovementControl


@dataclass(frozen=True)
class GeometryParams:
    approach_length_ft: float = APPROACH_LENGTH_FT
    jam_spacing_ft: float = JAM_SPACING_FT
    short_lane_ft: float = SHORT_LANE_FT
    extended_short_lane_ft: float = EXTENDED_SHORT_LANE_FT
    diverge_lane_ft: float = SHORT_LANE_FT
    detection_zone_ft: float = DETECTION_ZONE_FT
    # cross-street approach widths (arterial-scale; only totals were observed)
    se_left_lanes: int = 2
    se_main_lanes: int = 3
    ne_lanes: int = 2
    sw_lanes: int = 2


@dataclass(frozen=True)
class IntersectionDesign:
    """Immutable lane graph for one design variant; safe to share across runs."""

    variant: DesignVariant
    lanes: tuple[LaneSegment, ...]
    diverge_offset_ft: float
    movement_map: dict[tuple[Entrance, Movement], MovementRule] = field(hash=False)
    # conflicting (entrance, movement) streams scanned by each stop sign
    conflicts: dict[str, tuple[tuple[Entrance, Movement], ...]] = field(hash=False)
    jam_spacing_ft: float = JAM_SPACING_FT
    detection_zone_ft: float = DETECTION_ZONE_FT

    def lane(self, lane_id: str) -> LaneSegment:
        for seg in self.lanes:
            if seg.id == lane_id:
                return seg
        raise KeyError(lane_id)

    def lane_ids(self) -> tuple[str, ...]:
        return tuple(seg.id for seg in self.lanes)

    def to_json(self) -> str:
        """Stable serialized form; identical designs serialize byte-identically."""
        doc = {
            "variant": self.variant.value,
            "diverge_offset_ft": self.diverge_offset_ft,
            "jam_spacing_ft": self.jam_spacing_ft,
            "detection_zone_ft": self.detection_zone_ft,
            "lanes": [
                {
                    "id": seg.id,
                    "entrance": seg.entrance.value,
                    "role": seg.role.value,
                    "length": seg.length,
                    "upstream_offset": seg.upstream_offset,
                    "storage": seg.storage,
                    "allowed_movements": sorted(m.value for m in seg.allowed_movements),
                }
                for seg in self.lanes
            ],
            "movement_map": {
                f"{ent.value}:{mov.value}": {
                    "lanes": list(rule.lanes),
                    "phase": rule.control.phase,
                    "stop_sign": rule.control.stop_sign,
                }
                for (ent, mov), rule in sorted(
                    self.movement_map.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
                )
            },
            "conflicts": {
                sign: [f"{e.value}:{m.value}" for e, m in streams]
                for sign, streams in sorted(self.conflicts.items())
            },
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _lane(
    lane_id: str,
    entrance: Entrance,
    role: LaneRole,
    length: float,
    jam: float,
    movements: set[Movement],
    upstream_offset: Optional[float] = None,
) -> LaneSegment:
    return LaneSegment(
        id=lane_id,
        entrance=entrance,
        role=role,
        length=length,
        upstream_offset=length if upstream_offset is None else upstream_offset,
        storage=storage_capacity(length, jam),
        allowed_movements=frozenset(movements),
    )


# Cross-street streams that a right turn released from a stop must yield to.
_RIGHT_TURN_CONFLICTS = (
    (Entrance.NE, Movement.THROUGH),
    (Entrance.SE, Movement.LEFT_TURN),
)


def build_design(
    variant: DesignVariant, params: GeometryParams = GeometryParams()
) -> IntersectionDesign:
    """Construct and validate the lane graph for one design variant.

    Pure: identical inputs give identical (byte-identical once serialized)
    designs.
    """
    jam = params.jam_spacing_ft
    approach = params.approach_length_ft

    if variant is DesignVariant.EXTENDED_SHORT:
        short_len = params.extended_short_lane_ft
    else:
        short_len = params.short_lane_ft
    if short_len >= approach:
        raise InvalidGeometryError(
            f"diverge offset {short_len} must lie inside the {approach} ft approach"
        )
    if variant is DesignVariant.ADDED_DIVERGE and params.diverge_lane_ft >= approach:
        raise InvalidGeometryError(
            f"diverge lane offset {params.diverge_lane_ft} exceeds the approach length"
        )

    short_movements = (
        {Movement.RIGHT_TURN}
        if variant is DesignVariant.RIGHT_TURN_ONLY
        else {Movement.THROUGH, Movement.RIGHT_TURN}
    )

    def bank(prefix: str, entrance: Entrance, count: int, movements: set[Movement]):
        return [
            _lane(f"{prefix}_{i + 1}", entrance, LaneRole.GENERIC, approach, jam, movements)
            for i in range(count)
        ]

    se_left = bank("se_left", Entrance.SE, params.se_left_lanes, {Movement.LEFT_TURN})
    se_main = bank(
        "se_main", Entrance.SE, params.se_main_lanes, {Movement.THROUGH, Movement.RIGHT_TURN}
    )
    ne_main = bank(
        "ne_main", Entrance.NE, params.ne_lanes,
        {Movement.LEFT_TURN, Movement.THROUGH, Movement.RIGHT_TURN},
    )
    sw_main = bank(
        "sw_main", Entrance.SW, params.sw_lanes,
        {Movement.LEFT_TURN, Movement.THROUGH, Movement.RIGHT_TURN},
    )

    lanes = [
        _lane("nw_left", Entrance.NW, LaneRole.LEFT, approach, jam, {Movement.THROUGH}),
        _lane("nw_middle", Entrance.NW, LaneRole.MIDDLE, approach, jam, {Movement.THROUGH}),
        _lane("nw_short", Entrance.NW, LaneRole.SHORT, short_len, jam, short_movements),
    ]
    if variant is DesignVariant.ADDED_DIVERGE:
        lanes.append(
            _lane(
                "nw_diverge",
                Entrance.NW,
                LaneRole.DIVERGE,
                params.diverge_lane_ft,
                jam,
                {Movement.RIGHT_TURN},
            )
        )
    lanes.extend(se_left + se_main + ne_main + sw_main)

    if variant is DesignVariant.RIGHT_TURN_ONLY:
        nw_through_lanes: tuple[str, ...] = ("nw_left", "nw_middle")
    else:
        nw_through_lanes = ("nw_left", "nw_middle", "nw_short")

    if variant is DesignVariant.ADDED_DIVERGE:
        nw_right = MovementRule(("nw_diverge",), MovementControl(phase=None, stop_sign="B"))
    else:
        nw_right = MovementRule(("nw_short",), MovementControl(phase=5, stop_sign="RTOR"))

    se_left_ids = tuple(seg.id for seg in se_left)
    se_main_ids = tuple(seg.id for seg in se_main)
    ne_ids = tuple(seg.id for seg in ne_main)
    sw_ids = tuple(seg.id for seg in sw_main)
    movement_map: dict[tuple[Entrance, Movement], MovementRule] = {
        (Entrance.NW, Movement.THROUGH): MovementRule(nw_through_lanes, MovementControl(phase=5)),
        (Entrance.NW, Movement.RIGHT_TURN): nw_right,
        (Entrance.NE, Movement.LEFT_TURN): MovementRule(ne_ids, MovementControl(phase=1)),
        (Entrance.NE, Movement.THROUGH): MovementRule(ne_ids, MovementControl(phase=1)),
        (Entrance.NE, Movement.RIGHT_TURN): MovementRule(ne_ids, MovementControl(phase=1)),
        (Entrance.SW, Movement.LEFT_TURN): MovementRule(sw_ids, MovementControl(phase=2)),
        (Entrance.SW, Movement.THROUGH): MovementRule(sw_ids, MovementControl(phase=2)),
        (Entrance.SW, Movement.RIGHT_TURN): MovementRule(sw_ids, MovementControl(phase=2)),
        (Entrance.SE, Movement.LEFT_TURN): MovementRule(se_left_ids, MovementControl(phase=3)),
        (Entrance.SE, Movement.THROUGH): MovementRule(se_main_ids, MovementControl(phase=4)),
        (Entrance.SE, Movement.RIGHT_TURN): MovementRule(se_main_ids, MovementControl(phase=4)),
    }

    conflicts: dict[str, tuple[tuple[Entrance, Movement], ...]] = {
        "RTOR": _RIGHT_TURN_CONFLICTS
    }
    if variant is DesignVariant.ADDED_DIVERGE:
        conflicts["B"] = _RIGHT_TURN_CONFLICTS

    return IntersectionDesign(
        variant=variant,
        lanes=tuple(lanes),
        diverge_offset_ft=short_len,
        movement_map=movement_map,
        conflicts=conflicts,
        jam_spacing_ft=jam,
        detection_zone_ft=params.detection_zone_ft,
    )


def receiving_lane(
    design: IntersectionDesign, entrance: Entrance, movement: Movement
) -> MovementRule:
    """Lanes plus release control for a movement; raises on illegal movements."""
    try:
        return design.movement_map[(entrance, movement)]
    except KeyError:
        raise IllegalMovementError(f"movement {movement.value} from {entrance.value} not allowed")
