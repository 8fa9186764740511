"""Section delay and queue-length measurement.

Delay is measured over a fixed section per lane, from the vehicle input point
at the upstream end of the approach to the lane's stop point (stop bar, or
the stop sign for the bypass lane): sample = traversal time minus the ideal
free-flow time, floored at zero.  Only completed traversals produce samples.

Queue counters sit at the stop bar and track the rear extent of the chain of
slow vehicles anchored there, with enter/leave speed hysteresis.  Each queued
vehicle contributes one jam spacing of footprint, so nine stored vehicles read
as 9 * 22.4 = 201.6 ft.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import MeasurementError

QUEUE_ENTER_SPEED = 7.0  # ft/s, roughly 5 km/h
QUEUE_LEAVE_SPEED = 14.0  # ft/s, roughly 10 km/h
QUEUE_CHAIN_SLACK = 10.0  # ft beyond jam spacing still counted contiguous


@dataclass(frozen=True)
class DelaySection:
    lane_id: str
    length_ft: float
    free_speed: float

    @property
    def ideal_time(self) -> float:
        return self.length_ft / self.free_speed


def record_traversal(
    section: DelaySection, entry_time: Optional[float], exit_time: float
) -> float:
    """Delay sample for one completed traversal, floored at zero."""
    if entry_time is None:
        raise MeasurementError(f"vehicle never entered section {section.lane_id}")
    if exit_time < entry_time:
        raise MeasurementError(
            f"exit {exit_time} before entry {entry_time} on {section.lane_id}"
        )
    return max(0.0, (exit_time - entry_time) - section.ideal_time)


@dataclass
class QueueCounter:
    lane_id: str
    position_ft: float = 0.0  # anchor, feet upstream of the stop point
    enter_speed: float = QUEUE_ENTER_SPEED
    leave_speed: float = QUEUE_LEAVE_SPEED
    jam_spacing: float = 22.4
    max_observed: float = 0.0
    queued: list[bool] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.leave_speed <= self.enter_speed:
            raise MeasurementError("queue leave threshold must exceed enter threshold")


def update_queue(
    counter: QueueCounter, positions: Sequence[float], speeds: Sequence[float]
) -> float:
    """Refresh queue membership and return the current queue extent in feet.

    `positions`/`speeds` are ordered front to back.  A vehicle joins when
    slower than the enter threshold and contiguous (within jam spacing plus
    slack) with the chain anchored at the counter; it stays a member until
    faster than the leave threshold.  The extent runs from the anchor to the
    rear of the last member, one jam spacing per vehicle.
    """
    n = len(positions)
    flags = counter.queued
    if len(flags) != n:  # standalone use; engine keeps flags aligned itself
        flags = [False] * n
        counter.queued = flags
    slack = counter.jam_spacing + QUEUE_CHAIN_SLACK
    anchor = counter.position_ft

    qlen = 0.0
    chain_alive = True
    for i in range(n):
        v = speeds[i]
        if flags[i]:
            if v > counter.leave_speed:
                flags[i] = False
        elif chain_alive and v < counter.enter_speed and positions[i] >= anchor:
            front_gap = positions[i] - (anchor if i == 0 else positions[i - 1])
            if front_gap <= slack:
                flags[i] = True
        if flags[i]:
            qlen = max(qlen, positions[i] + counter.jam_spacing - anchor)
        else:
            chain_alive = False
    counter.max_observed = max(counter.max_observed, qlen)
    return qlen


@dataclass(frozen=True)
class LaneMetrics:
    n: int
    mean_delay_s: float  # accounting selected by the run config
    mean_delay_vissim_s: float  # entry clock starts when the vehicle gets in
    mean_delay_full_s: float  # entry clock starts at the scheduled arrival
    max_queue_ft: float


def summarize(
    samples: dict[str, list[float]], counters: dict[str, QueueCounter]
) -> dict[str, LaneMetrics]:
    """Per-lane mean over completed traversals; empty lanes report (0, 0)."""
    out = {}
    for lane_id in sorted(set(samples) | set(counters)):
        vals = samples.get(lane_id, [])
        mean = sum(vals) / len(vals) if vals else 0.0
        counter = counters.get(lane_id)
        out[lane_id] = LaneMetrics(
            n=len(vals),
            mean_delay_s=mean,
            mean_delay_vissim_s=mean,
            mean_delay_full_s=mean,
            max_queue_ft=counter.max_observed if counter else 0.0,
        )
    return out
