"""Time-stepped orchestration of one simulation run.

Fixed per-step order: (1) detector scan feeds the controller; (2) due
arrivals inject at the approach entry when there is space, otherwise they
defer with their original timestamps; (3) turn-bay feeders hand eligible
vehicles into the bay while it has storage; (4) every lane advances one
car-following step; (5) stop-controlled heads run gap acceptance and
discharge on accept; (6) metric and conservation bookkeeping.  A run is
fully deterministic given (design, configs, schedule).

Approach layout.  The left and middle lanes run the full approach.  Traffic
bound for the short lane (and for the bypass lane of the added-diverge
design) travels a curbside feeder alignment to the bay mouth at the diverge
offset.  Admission into the feeder is throttled to the bay storage plus a
small overflow allowance, so the unbounded overflow of an oversaturated bay
waits upstream of the input point, as the reference tooling's inputs do.
The two spillback couplings are both modeled: a feeder head stalled at a
full bay stands across the middle lane (a wall at the diverge offset that
through traffic cannot pass), and a middle-lane queue standing over the
mouth keeps feeder vehicles out of the bay.

Delay sections span the whole approach, from the input point (1500 ft out
by default) to the lane's stop point; feeder plus bay cover the same
distance, so every lane shares one ideal time.  Both delay accountings are
recorded on every run: the network-entry clock (waiting to get in is
invisible) and the scheduled-arrival clock.  `SimConfig.count_pre_entry_delay`
selects which one the run reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels, signals
from ._kernels import BAR_GREEN, BAR_STOP, BAR_YELLOW
from .demand import ArrivalSchedule, LaneIntent, Reassignment
from .errors import InvalidConfigError
from .metrics import LaneMetrics, QUEUE_CHAIN_SLACK, QUEUE_ENTER_SPEED, QUEUE_LEAVE_SPEED
from .network import DesignVariant, Entrance, IntersectionDesign, Movement
from .signals import ControllerConfig, Indication, Interval, controller_step, initial_state
from .traffic import CarFollowingParams, DivergeOutcome, GapAcceptanceParams, TrajectoryRecorder, diverge_attempt

_MOV_CODE = {Movement.LEFT_TURN: 0, Movement.THROUGH: 1, Movement.RIGHT_TURN: 2}
_MOV_THROUGH = _MOV_CODE[Movement.THROUGH]
_MOV_LEFT = _MOV_CODE[Movement.LEFT_TURN]
_MOV_RIGHT = _MOV_CODE[Movement.RIGHT_TURN]
_TRANSFER_WINDOW_FT = 10.0  # must exceed the farthest one-step travel (v0*dt)
_ENCROACH_TOL_FT = 2.0  # stalled feeder head this close to the mouth blocks the middle lane
_ENCROACH_DWELL_S = 4.0  # stall must outlast the bay's discharge turnover to count as standing
_STOP_TOL_FT = 6.0  # head close enough to the bar to count as waiting at it
_CONFLICT_MIN_SPEED = 2.0  # ft/s; slower conflicting vehicles are parked, not arriving


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    horizon: float = 3600.0
    warmup: float = 0.0
    cf: CarFollowingParams = CarFollowingParams()
    gap: GapAcceptanceParams = GapAcceptanceParams()
    count_pre_entry_delay: bool = False
    bay_overflow_allowance: int = 3  # feeder vehicles admitted beyond bay storage
    blockage_filter_speed: float = 3.0  # ft/s; crawl past a standing bay overflow
    queue_enter_speed: float = QUEUE_ENTER_SPEED
    queue_leave_speed: float = QUEUE_LEAVE_SPEED
    queue_counter_offset_ft: float = 0.0
    check_conservation: bool = False
    keep_controller_trace: bool = False

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.horizon <= 0:
            raise InvalidConfigError("dt and horizon must be positive")
        if not (0 <= self.warmup < self.horizon):
            raise InvalidConfigError("warmup must lie inside the horizon")
        if self.bay_overflow_allowance < 1:
            raise InvalidConfigError("bay overflow allowance must be at least 1")


@dataclass(frozen=True)
class ControllerSummary:
    cycles: int
    mean_cycle_s: float
    green_share: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class Totals:
    scheduled: int  # arrivals whose time has passed
    injected: int
    discharged: int
    in_network: int
    deferred: int  # due but still waiting for entry space


@dataclass(frozen=True)
class RunResult:
    design: DesignVariant
    reassignment: Reassignment
    code: str
    seed: int
    dt: float
    horizon: float
    count_pre_entry_delay: bool
    lanes: tuple[tuple[str, LaneMetrics], ...]
    controller: ControllerSummary
    totals: Totals
    controller_trace: Optional[tuple[tuple[float, int, str], ...]] = None

    def lane_metrics(self, lane_id: str) -> LaneMetrics:
        for lid, lm in self.lanes:
            if lid == lane_id:
                return lm
        raise KeyError(lane_id)

    def lane_ids(self) -> tuple[str, ...]:
        return tuple(lid for lid, _ in self.lanes)


class ActuatedController:
    """Engine-facing wrapper around the pure controller step."""

    def __init__(self, config: ControllerConfig):
        self.config = config
        self.state = initial_state(config)

    def step(self, dt: float, actuations: set[int]) -> Indication:
        self.state, indication = controller_step(self.config, self.state, dt, actuations)
        return indication


class _UniformIndication:
    active_phase: Optional[int] = None
    interval: Optional[Interval] = None

    def __init__(self, color: str):
        self.color = color

    def signal_for(self, phase_id) -> str:
        return self.color


class ScriptedController:
    """Diagnostic controller showing one scripted color to every phase."""

    def __init__(self, color_at: Callable[[float], str]):
        self.color_at = color_at
        self.t = 0.0

    def step(self, dt: float, actuations: set[int]) -> _UniformIndication:
        indication = _UniformIndication(self.color_at(self.t))
        self.t += dt
        return indication


class _Lane:
    """Array-of-struct state for one lane, ordered front (stop point) to back."""

    __slots__ = (
        "lane_id", "length", "capacity", "control_phase", "rtor", "stop_controlled",
        "n", "pos", "vel", "mov", "vid", "t_sched", "t_entry", "queued",
        "sum_v", "sum_f", "n_done", "max_queue", "discharged",
    )

    def __init__(self, lane_id, length, capacity, control_phase, rtor, stop_controlled):
        self.lane_id = lane_id
        self.length = length
        self.capacity = capacity
        self.control_phase = control_phase
        self.rtor = rtor
        self.stop_controlled = stop_controlled
        size = capacity + 8
        self.n = 0
        self.pos = np.zeros(size)
        self.vel = np.zeros(size)
        self.mov = np.zeros(size, np.int8)
        self.vid = np.zeros(size, np.int64)
        self.t_sched = np.zeros(size)
        self.t_entry = np.zeros(size)
        self.queued = np.zeros(size, np.bool_)
        self.sum_v = 0.0
        self.sum_f = 0.0
        self.n_done = 0
        self.max_queue = 0.0
        self.discharged = 0

    def append(self, pos, vel, mov, vid, t_sched, t_entry) -> None:
        i = self.n
        self.pos[i] = pos
        self.vel[i] = vel
        self.mov[i] = mov
        self.vid[i] = vid
        self.t_sched[i] = t_sched
        self.t_entry[i] = t_entry
        self.queued[i] = False
        self.n += 1

    def remove_at(self, i: int) -> tuple[float, float, int, int, float, float]:
        rec = (
            float(self.pos[i]), float(self.vel[i]), int(self.mov[i]),
            int(self.vid[i]), float(self.t_sched[i]), float(self.t_entry[i]),
        )
        n = self.n
        for arr in (self.pos, self.vel, self.mov, self.vid,
                    self.t_sched, self.t_entry, self.queued):
            arr[i:n - 1] = arr[i + 1:n]
        self.n = n - 1
        return rec

    def pop_front(self):
        return self.remove_at(0)


class _EventStream:
    """Per-entry-lane arrival queue; a blocked head defers the whole stream."""

    __slots__ = ("times", "mov", "cursor", "due")

    def __init__(self):
        self.times: list[float] = []
        self.mov: list[int] = []
        self.cursor = 0  # next event not yet injected
        self.due = 0  # events whose arrival time has passed


def _resolve_event(variant: DesignVariant, entrance: Entrance, movement: Movement,
                   intent: LaneIntent) -> str:
    """Entry stream key for one arrival; raises on design mismatch."""
    if entrance is Entrance.NW:
        if movement is Movement.LEFT_TURN:
            raise InvalidConfigError("no left turns exist from the NW entrance")
        if intent in (LaneIntent.LEFT, LaneIntent.MIDDLE):
            if movement is not Movement.THROUGH:
                raise InvalidConfigError(
                    f"NW {intent.value}-lane arrivals must be through traffic"
                )
            return "nw_left" if intent is LaneIntent.LEFT else "nw_middle"
        if intent is LaneIntent.SHORT:
            if movement is Movement.RIGHT_TURN and variant is DesignVariant.ADDED_DIVERGE:
                return "nw_diverge_feeder"
            if movement is Movement.THROUGH and variant is DesignVariant.RIGHT_TURN_ONLY:
                raise InvalidConfigError(
                    "short lane is right-turn only; retarget the schedule for this design"
                )
            return "nw_short_feeder"
        raise InvalidConfigError(f"NW arrivals need an explicit lane intent, got {intent}")
    if entrance is Entrance.SE:
        return "se_left" if movement is Movement.LEFT_TURN else "se_main"
    if entrance is Entrance.NE:
        return "ne"
    if entrance is Entrance.SW:
        return "sw"
    raise InvalidConfigError(f"cannot inject arrivals at {entrance}")


class Simulation:
    def __init__(
        self,
        design: IntersectionDesign,
        controller,
        schedule: ArrivalSchedule,
        config: SimConfig = SimConfig(),
        reassignment: Reassignment = Reassignment.NONE,
        code: str = "",
        trajectory: Optional[TrajectoryRecorder] = None,
    ):
        if schedule.horizon > config.horizon + 1e-9:
            raise InvalidConfigError("schedule horizon exceeds simulation horizon")
        self.design = design
        self.controller = controller
        self.schedule = schedule
        self.config = config
        self.reassignment = reassignment
        self.code = code
        self.trajectory = trajectory

        jam = design.jam_spacing_ft
        self.lanes: dict[str, _Lane] = {}
        for seg in design.lanes:
            phase = None
            rtor = False
            stop_controlled = False
            for rule in design.movement_map.values():
                if seg.id not in rule.lanes:
                    continue
                if rule.control.phase is not None:
                    phase = rule.control.phase
                if rule.control.stop_sign is not None:
                    if rule.control.phase is None:
                        stop_controlled = True
                    else:
                        rtor = True
            self.lanes[seg.id] = _Lane(seg.id, seg.length, seg.storage, phase, rtor,
                                       stop_controlled)

        # curbside feeder alignments delivering bay-bound traffic to the mouth
        approach = self.lanes["nw_left"].length
        offset = design.diverge_offset_ft
        feeder_len = approach - offset
        feeder_cap = int(feeder_len // jam)
        self._feeders: list[tuple[_Lane, _Lane]] = []
        short_feeder = _Lane("nw_short_feeder", feeder_len, feeder_cap, None, False, False)
        self.lanes["nw_short_feeder"] = short_feeder
        self._feeders.append((short_feeder, self.lanes["nw_short"]))
        if "nw_diverge" in self.lanes:
            div_feeder = _Lane("nw_diverge_feeder", feeder_len, feeder_cap, None, False, False)
            self.lanes["nw_diverge_feeder"] = div_feeder
            self._feeders.append((div_feeder, self.lanes["nw_diverge"]))

        self._report_ids = design.lane_ids()
        self._lane_list = list(self.lanes.values())
        self._middle = self.lanes["nw_middle"]
        self._ideal_time = approach / config.cf.v0
        self._offset = offset
        self.middle_wall = False  # observable: spillback wall state after last step
        self._stall_time = [0.0] * len(self._feeders)

        def lane_bank(prefix: str) -> list[_Lane]:
            return [lane for lid, lane in self.lanes.items() if lid.startswith(prefix)]

        self._entry_lanes: dict[str, list[_Lane]] = {
            "nw_left": [self.lanes["nw_left"]],
            "nw_middle": [self.lanes["nw_middle"]],
            "nw_short_feeder": [short_feeder],
            "se_left": lane_bank("se_left_"),
            "se_main": lane_bank("se_main_"),
            "ne": lane_bank("ne_main_"),
            "sw": lane_bank("sw_main_"),
        }
        if "nw_diverge_feeder" in self.lanes:
            self._entry_lanes["nw_diverge_feeder"] = [self.lanes["nw_diverge_feeder"]]
        self._conflict_lanes = [
            (lane, _MOV_THROUGH) for lane in lane_bank("ne_main_")
        ] + [(lane, _MOV_LEFT) for lane in lane_bank("se_left_")]

        self.streams: dict[str, _EventStream] = {}
        for ev in schedule.events:
            key = _resolve_event(design.variant, ev.entrance, ev.movement, ev.lane_intent)
            stream = self.streams.setdefault(key, _EventStream())
            stream.times.append(ev.time)
            stream.mov.append(_MOV_CODE[ev.movement])
        self._stream_list = list(self.streams.values())

        first = getattr(controller, "config", None)
        self._first_phase = first.phases[0].phase_id if first is not None else None

        self.n_injected = 0
        self.n_discharged = 0
        self._next_vid = 0
        self._trace: list[tuple[float, int, str]] = []
        self._green_time: dict[int, float] = {}
        self._cycle_starts: list[float] = []
        self._prev_indication: Optional[tuple] = None

    # -- step phases ---------------------------------------------------

    def _actuations(self) -> set[int]:
        zone = self.design.detection_zone_ft
        act = set()
        for lane in self._lane_list:
            if lane.control_phase is not None and lane.n > 0 and lane.pos[0] <= zone:
                act.add(lane.control_phase)
        return act

    def _admission_open(self, lane: _Lane) -> bool:
        for feeder, bay in self._feeders:
            if feeder is lane:
                return feeder.n + bay.n < bay.capacity + self.config.bay_overflow_allowance
        return True

    def _entry_lane(self, key: str) -> Optional[_Lane]:
        """Least-occupied lane of the stream's bank with room at the entry."""
        cf = self.config.cf
        best = None
        for lane in self._entry_lanes[key]:
            if lane.n > 0 and lane.pos[lane.n - 1] > lane.length - cf.s0:
                continue
            if not self._admission_open(lane):
                continue
            if best is None or lane.n < best.n:
                best = lane
        return best

    def _inject(self, t: float) -> None:
        cf = self.config.cf
        limit = t + 1e-9
        for key, stream in self.streams.items():
            times = stream.times
            while stream.due < len(times) and times[stream.due] <= limit:
                stream.due += 1
            cur = stream.cursor
            while cur < stream.due:
                lane = self._entry_lane(key)
                if lane is None:
                    break
                gap = lane.length - lane.pos[lane.n - 1] if lane.n else 1e9
                speed = min(cf.v0, max(0.0, (gap - cf.s0) / cf.T))
                lane.append(
                    pos=lane.length, vel=speed, mov=stream.mov[cur],
                    vid=self._next_vid, t_sched=times[cur], t_entry=t,
                )
                self._next_vid += 1
                self.n_injected += 1
                cur += 1
            stream.cursor = cur

    def _serve_feeders(self) -> bool:
        """Hand feeder heads into their bays; returns the middle-lane wall state.

        A head that cannot enter a full bay stalls at the mouth.  Only a
        sustained stall (longer than the bay's discharge turnover) counts as
        a standing overflow that blocks the middle lane; while the bay is
        discharging and refilling, the overflow rolls and the middle filters
        past it.
        """
        wall = False
        dt = self.config.dt
        s0 = self.config.cf.s0
        for fi, (feeder, bay) in enumerate(self._feeders):
            stalled = False
            while feeder.n and feeder.pos[0] <= _TRANSFER_WINDOW_FT:
                if diverge_attempt(bay.n, bay.capacity) is DivergeOutcome.BLOCKED:
                    stalled = feeder.pos[0] <= _ENCROACH_TOL_FT
                    break
                # a bay rear still near the top leaves the newcomer poking out
                # of the mouth; it creeps in as the bay queue advances
                insert_pos = bay.length
                if bay.n and bay.pos[bay.n - 1] + s0 > insert_pos:
                    insert_pos = bay.pos[bay.n - 1] + s0
                _, vel, mov, vid, t_sched, t_entry = feeder.pop_front()
                bay.append(insert_pos, vel, mov, vid, t_sched, t_entry)
            if stalled:
                self._stall_time[fi] += dt
                if self._stall_time[fi] >= _ENCROACH_DWELL_S:
                    wall = True
            else:
                self._stall_time[fi] = 0.0
        return wall

    def _bar_code(self, lane: _Lane, indication) -> int:
        if lane.stop_controlled:
            return BAR_STOP
        color = indication.signal_for(lane.control_phase)
        if color == signals.GREEN:
            return BAR_GREEN
        if color == signals.YELLOW:
            return BAR_YELLOW
        return BAR_STOP

    def _conflict_eta(self) -> float:
        best = 1.0e12
        for lane, mov_code in self._conflict_lanes:
            eta = _kernels.min_conflict_eta(
                lane.pos, lane.vel, lane.mov, lane.n, mov_code, _CONFLICT_MIN_SPEED
            )
            if eta < best:
                best = eta
        return best

    def _record_discharge(self, lane: _Lane, rec, exit_time: float) -> None:
        t_sched, t_entry = rec[4], rec[5]
        lane.discharged += 1
        if exit_time <= self.config.warmup:
            return
        lane.sum_v += max(0.0, (exit_time - t_entry) - self._ideal_time)
        lane.sum_f += max(0.0, (exit_time - t_sched) - self._ideal_time)
        lane.n_done += 1

    def _note_controller(self, t_end: float, indication) -> None:
        active = getattr(indication, "active_phase", None)
        if active is None:
            return
        if indication.interval is Interval.GREEN:
            self._green_time[active] = self._green_time.get(active, 0.0) + self.config.dt
        key = (active, indication.interval)
        if key != self._prev_indication:
            if self.config.keep_controller_trace:
                self._trace.append((round(t_end, 6), active, indication.interval.value))
            if indication.interval is Interval.GREEN and active == self._first_phase:
                self._cycle_starts.append(t_end)
            self._prev_indication = key

    def _step(self, t: float) -> None:
        cfg = self.config
        dt = cfg.dt
        cf = cfg.cf
        t_end = t + dt

        indication = self.controller.step(dt, self._actuations())
        self._note_controller(t_end, indication)
        self._inject(t)
        self.middle_wall = self._serve_feeders()

        past_warmup = t_end > cfg.warmup
        for lane in self._lane_list:
            if lane.n == 0:
                continue
            bar = self._bar_code(lane, indication)
            wall = self.middle_wall and lane is self._middle
            qlen = _kernels.advance_lane(
                lane.pos, lane.vel, lane.queued, lane.n, dt,
                cf.v0, cf.a, cf.b, cf.T, cf.s0,
                bar, wall, self._offset, cfg.blockage_filter_speed,
                cfg.queue_enter_speed, cfg.queue_leave_speed,
                cf.s0 + QUEUE_CHAIN_SLACK, cfg.queue_counter_offset_ft,
            )
            if past_warmup and qlen > lane.max_queue:
                lane.max_queue = qlen

            while lane.n and lane.pos[0] < -1e-9:
                self._record_discharge(lane, lane.pop_front(), t_end)
                self.n_discharged += 1

            releasing = lane.stop_controlled or (lane.rtor and bar == BAR_STOP)
            if releasing and lane.n:
                accepts = lane.stop_controlled or lane.mov[0] == _MOV_RIGHT
                if (
                    accepts
                    and lane.pos[0] <= _STOP_TOL_FT
                    and lane.vel[0] <= cfg.gap.full_stop_speed
                    and self._conflict_eta() >= cfg.gap.critical_gap
                ):
                    self._record_discharge(lane, lane.pop_front(), t_end)
                    self.n_discharged += 1

        if self.trajectory is not None:
            for lane in self._lane_list:
                for i in range(lane.n):
                    self.trajectory.record(
                        t_end, int(lane.vid[i]), lane.lane_id,
                        float(lane.pos[i]), float(lane.vel[i]),
                    )

        if cfg.check_conservation:
            snap = self.totals_now()
            assert snap.injected == snap.discharged + snap.in_network, "vehicle conservation"
            assert snap.scheduled == snap.injected + snap.deferred, "arrival conservation"

    # -- public ----------------------------------------------------------

    def totals_now(self) -> Totals:
        in_network = sum(lane.n for lane in self._lane_list)
        due = sum(s.due for s in self._stream_list)
        deferred = due - self.n_injected
        return Totals(
            scheduled=due, injected=self.n_injected, discharged=self.n_discharged,
            in_network=in_network, deferred=deferred,
        )

    def run(self) -> RunResult:
        cfg = self.config
        steps = int(round(cfg.horizon / cfg.dt))
        for k in range(steps):
            self._step(k * cfg.dt)
        return self._result()

    def _result(self) -> RunResult:
        cfg = self.config
        lanes = []
        for lane_id in self._report_ids:
            lane = self.lanes[lane_id]
            mean_v = lane.sum_v / lane.n_done if lane.n_done else 0.0
            mean_f = lane.sum_f / lane.n_done if lane.n_done else 0.0
            lanes.append(
                (
                    lane_id,
                    LaneMetrics(
                        n=lane.n_done,
                        mean_delay_s=mean_f if cfg.count_pre_entry_delay else mean_v,
                        mean_delay_vissim_s=mean_v,
                        mean_delay_full_s=mean_f,
                        max_queue_ft=lane.max_queue,
                    ),
                )
            )
        starts = self._cycle_starts
        cycles = max(0, len(starts) - 1)
        mean_cycle = (starts[-1] - starts[0]) / cycles if cycles else 0.0
        summary = ControllerSummary(
            cycles=cycles,
            mean_cycle_s=mean_cycle,
            green_share=tuple(
                (phase, self._green_time[phase] / cfg.horizon)
                for phase in sorted(self._green_time)
            ),
        )
        return RunResult(
            design=self.design.variant,
            reassignment=self.reassignment,
            code=self.code,
            seed=self.schedule.seed,
            dt=cfg.dt,
            horizon=cfg.horizon,
            count_pre_entry_delay=cfg.count_pre_entry_delay,
            lanes=tuple(lanes),
            controller=summary,
            totals=self.totals_now(),
            controller_trace=tuple(self._trace) if cfg.keep_controller_trace else None,
        )


def run_simulation(
    design: IntersectionDesign,
    controller_config: ControllerConfig,
    schedule: ArrivalSchedule,
    sim_config: SimConfig = SimConfig(),
    reassignment: Reassignment = Reassignment.NONE,
    code: str = "",
) -> RunResult:
    """One actuated-signal run; deterministic for fixed inputs."""
    sim = Simulation(
        design, ActuatedController(controller_config), schedule, sim_config,
        reassignment=reassignment, code=code,
    )
    return sim.run()
