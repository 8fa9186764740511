import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shortlane import _kernels, signals
from shortlane.network import DesignVariant, Entrance, Movement, build_design, storage_capacity
from shortlane.traffic import (
    CarFollowingParams,
    DivergeOutcome,
    GapAcceptanceParams,
    GapDecision,
    INF_GAP,
    Vehicle,
    detector_scan,
    diverge_attempt,
    follow_update,
    gap_accept,
    idm_acceleration,
)

CF = CarFollowingParams()
DT = 0.1


def make_vehicle(position=1000.0, speed=50.0, movement=Movement.THROUGH, lane="nw_left"):
    return Vehicle(
        id=0, entrance=Entrance.NW, movement=movement, lane=lane, target_lane=lane,
        position=position, speed=speed, arrival_time=0.0,
    )


class TestCarFollowing:
    def test_free_road_at_desired_speed_is_equilibrium(self):
        veh = make_vehicle(speed=CF.v0)
        speed, pos = follow_update(veh, INF_GAP, 0.0, None, CF, DT)
        assert speed == CF.v0
        assert pos == pytest.approx(veh.position - CF.v0 * DT)

    def test_standing_at_jam_gap_stays_queued(self):
        veh = make_vehicle(speed=0.0)
        assert idm_acceleration(0.0, CF.s0, 0.0, CF) == 0.0
        speed, pos = follow_update(veh, CF.s0, 0.0, None, CF, DT)
        assert speed == 0.0
        assert pos == veh.position

    def test_acceleration_value_on_open_road(self):
        # a * (1 - (30/50)^4) with a = 6
        acc = idm_acceleration(30.0, INF_GAP / 2, 0.0, CF)
        assert acc == pytest.approx(6.0 * (1.0 - 0.6**4), abs=1e-9)
        assert acc == pytest.approx(5.2224, abs=1e-4)

    def test_red_signal_parks_vehicle_at_bar(self):
        veh = make_vehicle(position=400.0, speed=50.0)
        for _ in range(2000):
            speed, pos = follow_update(veh, INF_GAP, 0.0, (signals.RED, veh.position), CF, DT)
            veh.speed, veh.position = speed, pos
        assert veh.position == pytest.approx(0.0, abs=1e-9)
        assert veh.speed == pytest.approx(0.0, abs=1e-9)

    def test_yellow_near_bar_at_speed_proceeds(self):
        veh = make_vehicle(position=30.0, speed=50.0)
        speed, pos = follow_update(veh, INF_GAP, 0.0, (signals.YELLOW, veh.position), CF, DT)
        assert speed > 45.0  # cannot stop comfortably, keeps going

    def test_yellow_far_from_bar_stops(self):
        veh = make_vehicle(position=400.0, speed=50.0)
        speed, _ = follow_update(veh, INF_GAP, 0.0, (signals.YELLOW, veh.position), CF, DT)
        assert speed < 50.0

    def test_gap_never_goes_below_jam_spacing(self):
        veh = make_vehicle(position=100.0, speed=50.0)
        gap = 60.0
        for _ in range(100):
            speed, pos = follow_update(veh, gap, 0.0, None, CF, DT)
            gap -= veh.position - pos
            veh.speed, veh.position = speed, pos
            assert gap >= CF.s0 - 1e-9

    def test_free_flow_speed_converges(self):
        veh = make_vehicle(position=1.0e7, speed=5.0)
        for _ in range(1000):
            veh.speed, veh.position = follow_update(veh, INF_GAP, 0.0, None, CF, DT)
        assert abs(veh.speed - CF.v0) < 0.1


class TestKernelMirrorsFollowUpdate:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_bitwise_agreement_on_random_lanes(self, seed):
        rng = random.Random(seed)
        n = rng.randint(1, 12)
        positions = []
        p = rng.uniform(5.0, 60.0)
        for _ in range(n):
            positions.append(p)
            p += CF.s0 + rng.uniform(2.0, 120.0)
        speeds = [rng.uniform(0.0, CF.v0) for _ in range(n)]
        bar = rng.choice([_kernels.BAR_GREEN, _kernels.BAR_STOP])

        pos = np.array(positions)
        vel = np.array(speeds)
        queued = np.zeros(n, bool)
        _kernels.advance_lane(
            pos, vel, queued, n, DT, CF.v0, CF.a, CF.b, CF.T, CF.s0,
            bar, False, 0.0, 1.0, 7.0, 14.0, CF.s0 + 10.0, 0.0,
        )

        for i in range(n):
            veh = make_vehicle(position=positions[i], speed=speeds[i])
            leader_gap = positions[i] - positions[i - 1] if i else INF_GAP
            leader_speed = speeds[i - 1] if i else 0.0
            signal = (signals.RED, positions[i]) if bar == _kernels.BAR_STOP else None
            speed, new_pos = follow_update(veh, leader_gap, leader_speed, signal, CF, DT)
            assert speed == vel[i], f"vehicle {i} speed"
            assert new_pos == pos[i], f"vehicle {i} position"


class TestDivergeAttempt:
    def test_space_available(self):
        assert diverge_attempt(8, 9) is DivergeOutcome.TRANSFERRED

    def test_full_is_blocked(self):
        assert diverge_attempt(9, 9) is DivergeOutcome.BLOCKED

    def test_full_is_full_at_any_capacity(self):
        assert diverge_attempt(14, 14) is DivergeOutcome.BLOCKED


class TestGapAccept:
    def test_wide_gap_proceeds(self):
        assert gap_accept(0.0, [8.0]) is GapDecision.PROCEED

    def test_short_gap_waits(self):
        assert gap_accept(0.0, [3.0]) is GapDecision.WAIT

    def test_no_conflicts_proceeds(self):
        assert gap_accept(0.0, []) is GapDecision.PROCEED

    def test_moving_vehicle_violates_full_stop(self):
        with pytest.raises(ValueError):
            gap_accept(10.0, [8.0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(min_value=0.0, max_value=30.0), max_size=8))
    def test_matches_brute_force_enumeration(self, etas):
        params = GapAcceptanceParams()
        # oracle: scan every conflict; any one inside the critical gap forces a wait
        blocked = any(eta < params.critical_gap for eta in etas)
        expected = GapDecision.WAIT if blocked else GapDecision.PROCEED
        assert gap_accept(0.0, etas, params) is expected


class TestDetectorScan:
    def setup_method(self):
        self.design = build_design(DesignVariant.BASELINE)

    def test_nw_through_near_bar_calls_phase5(self):
        veh = make_vehicle(position=10.0, lane="nw_middle")
        assert detector_scan(self.design, [veh]) == {5}

    def test_empty_network_calls_nothing(self):
        assert detector_scan(self.design, []) == set()

    def test_ne_left_in_zone_calls_phase1(self):
        veh = make_vehicle(position=35.0, movement=Movement.LEFT_TURN, lane="ne_main_1")
        veh.entrance = Entrance.NE
        assert detector_scan(self.design, [veh]) == {1}

    def test_vehicle_beyond_zone_not_detected(self):
        veh = make_vehicle(position=41.0, lane="nw_middle")
        assert detector_scan(self.design, [veh]) == set()


class TestQueueFormation:
    def run_red_queue(self, n_vehicles, lane_length, arrivals_gap=90.0):
        """Feed vehicles toward a permanently red bar; returns packed positions."""
        pos = np.zeros(n_vehicles + 4)
        vel = np.zeros(n_vehicles + 4)
        queued = np.zeros(n_vehicles + 4, bool)
        count = 0
        for k in range(60000):
            t = k * DT
            if count < n_vehicles and (count == 0 or pos[count - 1] < lane_length - CF.s0):
                pos[count] = lane_length
                vel[count] = min(CF.v0, (lane_length - pos[count - 1] - CF.s0) / CF.T) if count else CF.v0
                count += 1
            _kernels.advance_lane(
                pos, vel, queued, count, DT, CF.v0, CF.a, CF.b, CF.T, CF.s0,
                _kernels.BAR_STOP, False, 0.0, 1.0, 7.0, 14.0, CF.s0 + 10.0, 0.0,
            )
            if count == n_vehicles and vel[:count].max(initial=0.0) < 1e-9:
                break
        return pos[:count]

    def test_standing_queue_spacing_converges_to_jam_spacing(self):
        pos = self.run_red_queue(9, 1500.0)
        spacings = np.diff(pos)
        assert np.all(np.abs(spacings - CF.s0) < 0.1)

    def test_nine_vehicle_queue_extent(self):
        pos = self.run_red_queue(9, 1500.0)
        extent = pos[-1] + CF.s0
        assert abs(extent - 201.6) < 5.0

    def test_lane_fills_to_floor_capacity(self):
        # brute-force oracle: a lane under permanent red stores floor(L / s0)
        for length in (212.24, 313.71, 100.0):
            pos = self.run_red_queue(40, length)
            assert len(pos) == storage_capacity(length, CF.s0)

    def test_no_collisions_under_random_arrivals(self):
        rng = random.Random(7)
        pos = np.zeros(80)
        vel = np.zeros(80)
        queued = np.zeros(80, bool)
        n = 0
        for k in range(30000):
            if n < 70 and rng.random() < 0.03:
                if n == 0 or pos[n - 1] <= 1500.0 - CF.s0:
                    pos[n] = 1500.0
                    vel[n] = rng.uniform(0.0, CF.v0)
                    n += 1
            bar = _kernels.BAR_STOP if (k // 300) % 2 else _kernels.BAR_GREEN
            _kernels.advance_lane(
                pos, vel, queued, n, DT, CF.v0, CF.a, CF.b, CF.T, CF.s0,
                bar, False, 0.0, 1.0, 7.0, 14.0, CF.s0 + 10.0, 0.0,
            )
            while n and pos[0] < -1e-9:
                pos[:n - 1] = pos[1:n]
                vel[:n - 1] = vel[1:n]
                n -= 1
            gaps = np.diff(pos[:n])
            assert n < 2 or gaps.min() >= -1e-9
