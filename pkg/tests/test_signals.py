import io
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shortlane.errors import InvalidStepError
from shortlane.signals import (
    GREEN,
    RED,
    STOP_CONTROLLED,
    Interval,
    controller_step,
    default_controller_config,
    indication_for,
    initial_state,
    write_trace_csv,
)
from shortlane.network import DesignVariant, Entrance, Movement, build_design

DT = 0.1


def run_one_green(config, actuate_at=(), constant_actuation=False, phase_id=1):
    """Step from the start of `phase_id`'s green until it ends; returns its duration."""
    state = initial_state(config)
    state.active_phase = phase_id
    t = 0.0
    actuate_at = set(round(a, 6) for a in actuate_at)
    for _ in range(20000):
        calls = {phase_id} if constant_actuation or round(t, 6) in actuate_at else set()
        state, _ = controller_step(config, state, DT, calls)
        t += DT
        if state.interval is not Interval.GREEN:
            return t
    raise AssertionError("green never terminated")


class TestTimingPlan:
    def test_five_phases_with_field_timings(self):
        config = default_controller_config()
        assert [p.phase_id for p in config.phases] == [1, 2, 3, 4, 5]
        assert [p.min_green for p in config.phases] == [5, 5, 10, 20, 20]
        assert [p.max_green for p in config.phases] == [10, 10, 15, 30, 30]
        assert all(p.yellow == 3.0 for p in config.phases)
        assert all(p.red_clearance == 1.0 for p in config.phases)
        assert [p.vehicle_extension for p in config.phases] == [2, 2, 3, 3, 3]
        assert all(p.minimum_recall for p in config.phases)

    def test_phase3_row(self):
        p3 = default_controller_config().phase(3)
        assert (p3.min_green, p3.max_green, p3.yellow, p3.red_clearance) == (10, 15, 3, 1)

    def test_served_movements_partition(self):
        config = default_controller_config()
        served = [m for p in config.phases for m in p.served_movements]
        assert len(served) == len(set(served))
        assert (Entrance.NW, Movement.THROUGH) in config.phase(5).served_movements
        assert (Entrance.NW, Movement.LEFT_TURN) not in served


class TestGreenTermination:
    def test_max_out_under_constant_actuation(self):
        dur = run_one_green(default_controller_config(), constant_actuation=True)
        assert abs(dur - 10.0) <= DT

    def test_gap_out_at_min_green_without_actuation(self):
        dur = run_one_green(default_controller_config())
        assert abs(dur - 5.0) <= DT

    def test_single_actuation_extends_green(self):
        dur = run_one_green(default_controller_config(), actuate_at=[4.5])
        assert abs(dur - 6.5) <= DT

    def test_dt_must_be_positive(self):
        config = default_controller_config()
        with pytest.raises(InvalidStepError):
            controller_step(config, initial_state(config), 0.0, set())

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_green_always_within_bounds(self, seed):
        config = default_controller_config()
        rng = random.Random(seed)
        phase = rng.choice(config.phases)
        state = initial_state(config)
        state.active_phase = phase.phase_id
        t = 0.0
        while state.interval is Interval.GREEN:
            calls = {phase.phase_id} if rng.random() < 0.3 else set()
            state, _ = controller_step(config, state, DT, calls)
            t += DT
        assert phase.min_green - DT <= t <= phase.max_green + DT


class TestIntervalsAndCycle:
    def collect_trace(self, steps, actuation=lambda t: set()):
        config = default_controller_config()
        state = initial_state(config)
        rows = []
        prev = None
        for k in range(steps):
            state, ind = controller_step(config, state, DT, actuation(k * DT))
            key = (ind.active_phase, ind.interval)
            if key != prev:
                rows.append((round((k + 1) * DT, 6), ind.active_phase, ind.interval))
                prev = key
        return rows

    def test_change_intervals_are_exact(self):
        rows = self.collect_trace(4000)
        for i, (t, phase, interval) in enumerate(rows[:-2]):
            if interval is Interval.YELLOW:
                t_next, _, nxt = rows[i + 1]
                assert nxt is Interval.RED_CLEAR
                assert abs((t_next - t) - 3.0) <= DT
                t_green, _, g = rows[i + 2]
                assert g is Interval.GREEN
                assert abs((t_green - t_next) - 1.0) <= DT

    def test_minimum_recall_serves_every_phase(self):
        config = default_controller_config()
        window = sum(p.max_green + p.yellow + p.red_clearance for p in config.phases)
        rows = self.collect_trace(int(window / DT) + 10)
        greens = [phase for _, phase, interval in rows if interval is Interval.GREEN]
        assert set(greens) | {1} == {1, 2, 3, 4, 5}

    def test_cycle_order_is_fixed(self):
        rows = self.collect_trace(6000)
        greens = [phase for _, phase, interval in rows if interval is Interval.GREEN]
        for a, b in zip(greens, greens[1:]):
            assert b == (a % 5) + 1

    def test_deterministic_trace(self):
        actuation = lambda t: {5} if int(t * 10) % 7 == 0 else set()
        assert self.collect_trace(3000, actuation) == self.collect_trace(3000, actuation)

    def test_trace_csv(self):
        rows = [(0.1, 1, Interval.GREEN), (5.1, 1, Interval.YELLOW)]
        buf = io.StringIO()
        write_trace_csv(rows, buf)
        assert buf.getvalue() == (
            "time_s,active_phase,interval\n0.1,1,GREEN\n5.1,1,YELLOW\n"
        )


class TestIndicationFor:
    def test_short_lane_right_on_red_is_stop_controlled(self):
        design = build_design(DesignVariant.BASELINE)
        config = default_controller_config()
        state = initial_state(config)
        state.active_phase = 2
        _, ind = controller_step(config, state, DT, set())
        assert indication_for(design, "nw_short", Movement.RIGHT_TURN, ind) == STOP_CONTROLLED
        assert indication_for(design, "nw_short", Movement.THROUGH, ind) == RED

    def test_middle_through_on_phase5_green(self):
        design = build_design(DesignVariant.BASELINE)
        config = default_controller_config()
        state = initial_state(config)
        state.active_phase = 5
        _, ind = controller_step(config, state, DT, set())
        assert indication_for(design, "nw_middle", Movement.THROUGH, ind) == GREEN

    def test_diverge_lane_always_stop_controlled(self):
        design = build_design(DesignVariant.ADDED_DIVERGE)
        config = default_controller_config()
        state = initial_state(config)
        for phase in (1, 5):
            state.active_phase = phase
            _, ind = controller_step(config, state, DT, set())
            assert (
                indication_for(design, "nw_diverge", Movement.RIGHT_TURN, ind)
                == STOP_CONTROLLED
            )

    def test_unknown_lane_raises(self):
        design = build_design(DesignVariant.BASELINE)
        config = default_controller_config()
        _, ind = controller_step(config, initial_state(config), DT, set())
        with pytest.raises(KeyError):
            indication_for(design, "no_such_lane", Movement.THROUGH, ind)

    def test_split_phasing_one_phase_at_a_time(self):
        config = default_controller_config()
        state = initial_state(config)
        for _ in range(3000):
            state, ind = controller_step(config, state, DT, set())
            non_red = [p.phase_id for p in config.phases if ind.signal_for(p.phase_id) != RED]
            assert len(non_red) <= 1
