import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shortlane.demand import (
    ArrivalSchedule,
    EntranceFlows,
    LaneIntent,
    NWLaneFlows,
    Reassignment,
    all_codes,
    decode_scenario,
    encode_scenario,
    flows_for_code,
    generate_schedule,
    merge_sorted,
    nw_flows,
    retarget_schedule,
)
from shortlane.errors import InvalidCodeError, InvalidConfigError
from shortlane.network import DesignVariant, Entrance, Movement

# demand levels per entrance: (SE, NE, SW) columns, 1=high 2=medium 3=low
LEVEL_TABLE = {
    "se": {1: 1500.0, 2: 1000.0, 3: 500.0},
    "ne": {1: 1000.0, 2: 600.0, 3: 200.0},
    "sw": {1: 1000.0, 2: 600.0, 3: 200.0},
}


class TestScenarioCodes:
    def test_code_112(self):
        flows = decode_scenario("112")
        assert (flows.se, flows.ne, flows.sw) == (1500.0, 1000.0, 600.0)

    def test_code_333_low_row(self):
        flows = decode_scenario("333")
        assert (flows.se, flows.ne, flows.sw) == (500.0, 200.0, 200.0)

    @pytest.mark.parametrize("bad", ["140", "000", "44", "1234", "aaa", "12"])
    def test_invalid_codes_rejected(self, bad):
        with pytest.raises(InvalidCodeError):
            decode_scenario(bad)

    def test_exactly_27_codes(self):
        assert len(all_codes()) == 27

    def test_all_codes_match_level_table_and_are_distinct(self):
        seen = set()
        for code in all_codes():
            flows = decode_scenario(code)
            digits = [int(c) for c in code]
            assert flows.se == LEVEL_TABLE["se"][digits[0]]
            assert flows.ne == LEVEL_TABLE["ne"][digits[1]]
            assert flows.sw == LEVEL_TABLE["sw"][digits[2]]
            seen.add((flows.se, flows.ne, flows.sw))
        assert len(seen) == 27

    def test_decode_encode_roundtrip(self):
        for code in all_codes():
            assert encode_scenario(decode_scenario(code)) == code


class TestNwFlows:
    def test_observed_lane_split(self):
        assert nw_flows(DesignVariant.BASELINE) == NWLaneFlows(401.0, 343.0, 836.0)

    def test_scenario_one_moves_through_traffic_to_middle(self):
        assert nw_flows(DesignVariant.RIGHT_TURN_ONLY, Reassignment.SCENARIO_I) == NWLaneFlows(
            401.0, 1095.0, 84.0
        )

    def test_scenario_two_moves_middle_to_left(self):
        assert nw_flows(DesignVariant.RIGHT_TURN_ONLY, Reassignment.SCENARIO_II) == NWLaneFlows(
            744.0, 752.0, 84.0
        )

    def test_totals_preserved(self):
        for variant, reassignment in [
            (DesignVariant.BASELINE, Reassignment.NONE),
            (DesignVariant.RIGHT_TURN_ONLY, Reassignment.SCENARIO_I),
            (DesignVariant.RIGHT_TURN_ONLY, Reassignment.SCENARIO_II),
        ]:
            assert nw_flows(variant, reassignment).total == 1580.0

    def test_redistribution_arithmetic(self):
        scenario_one = nw_flows(DesignVariant.RIGHT_TURN_ONLY, Reassignment.SCENARIO_I)
        assert scenario_one.mid == 343 + round(0.9 * 836)
        assert scenario_one.short == round(0.1 * 836)

    def test_inconsistent_pairs_rejected(self):
        with pytest.raises(InvalidConfigError):
            nw_flows(DesignVariant.BASELINE, Reassignment.SCENARIO_I)
        with pytest.raises(InvalidConfigError):
            nw_flows(DesignVariant.RIGHT_TURN_ONLY, Reassignment.NONE)


class TestGenerateSchedule:
    def test_deterministic_for_fixed_seed(self):
        flows = flows_for_code("222")
        a = generate_schedule(flows, seed=7, horizon=600.0)
        b = generate_schedule(flows, seed=7, horizon=600.0)
        assert a == b
        buf_a, buf_b = io.StringIO(), io.StringIO()
        a.to_csv(buf_a)
        b.to_csv(buf_b)
        assert buf_a.getvalue() == buf_b.getvalue()

    def test_different_seeds_differ(self):
        flows = flows_for_code("222")
        assert generate_schedule(flows, 1, 600.0) != generate_schedule(flows, 2, 600.0)

    def test_stream_salt_changes_draws_not_identity(self):
        flows = flows_for_code("222")
        a = generate_schedule(flows, 1, 600.0, stream_salt=0)
        b = generate_schedule(flows, 1, 600.0, stream_salt=5)
        assert a.seed == b.seed
        assert a.events != b.events

    def test_poisson_event_count_near_expectation(self):
        flows = EntranceFlows(cross=decode_scenario("111"))
        horizon = 3600.0
        counts = []
        for seed in range(12):
            sched = generate_schedule(flows, seed, horizon)
            counts.append(sum(1 for ev in sched.events if ev.entrance is Entrance.SE))
        mean = np.mean(counts)
        assert abs(mean - 1500.0) <= 3 * math.sqrt(1500.0 / len(counts))

    def test_zero_flow_empty_schedule(self):
        flows = EntranceFlows(nw=NWLaneFlows(0.0, 0.0, 0.0))
        sched = generate_schedule(flows, 1, 600.0)
        assert sched.events == ()

    def test_times_sorted_within_horizon(self):
        sched = generate_schedule(flows_for_code("111"), 3, 900.0)
        assert merge_sorted(sched.events)
        assert all(0 <= ev.time < 900.0 for ev in sched.events)

    def test_deterministic_headways_rate_exact(self):
        flows = flows_for_code("222")
        sched = generate_schedule(flows, 1, 3600.0, deterministic_headways=True)
        nw_short = [ev for ev in sched.events if ev.lane_intent is LaneIntent.SHORT]
        assert len(nw_short) == 836
        rights = sum(1 for ev in nw_short if ev.movement is Movement.RIGHT_TURN)
        assert rights == pytest.approx(83.6, abs=1)

    def test_negative_flow_rejected(self):
        flows = EntranceFlows(nw=NWLaneFlows(-1.0, 343.0, 836.0))
        with pytest.raises(InvalidConfigError):
            generate_schedule(flows, 1, 600.0)

    def test_csv_roundtrip(self):
        sched = generate_schedule(flows_for_code("123"), 5, 300.0)
        buf = io.StringIO()
        sched.to_csv(buf)
        buf.seek(0)
        back = ArrivalSchedule.from_csv(buf, seed=5, horizon=300.0)
        assert [ev.entrance for ev in back.events] == [ev.entrance for ev in sched.events]
        assert all(
            abs(a.time - b.time) < 1e-6 for a, b in zip(back.events, sched.events)
        )


class TestRetargetSchedule:
    def make(self, seed=11):
        return generate_schedule(flows_for_code("222"), seed, 1200.0)

    def test_baseline_is_identity(self):
        sched = self.make()
        assert retarget_schedule(sched, DesignVariant.BASELINE).events == sched.events

    def test_right_turn_only_moves_displaced_through_traffic(self):
        sched = self.make()
        out = retarget_schedule(sched, DesignVariant.RIGHT_TURN_ONLY, Reassignment.SCENARIO_I)
        for before, after in zip(sched.events, out.events):
            assert before.time == after.time
            assert before.movement == after.movement
            if before.lane_intent is LaneIntent.SHORT and before.movement is Movement.THROUGH:
                assert after.lane_intent is LaneIntent.MIDDLE
            else:
                assert after.lane_intent is before.lane_intent
        shorts = [ev for ev in out.events if ev.lane_intent is LaneIntent.SHORT]
        assert shorts and all(ev.movement is Movement.RIGHT_TURN for ev in shorts)

    def test_scenario_two_also_moves_middle_to_left(self):
        sched = self.make()
        out = retarget_schedule(sched, DesignVariant.RIGHT_TURN_ONLY, Reassignment.SCENARIO_II)
        for before, after in zip(sched.events, out.events):
            if before.lane_intent is LaneIntent.MIDDLE:
                assert after.lane_intent is LaneIntent.LEFT
            if before.lane_intent is LaneIntent.SHORT and before.movement is Movement.THROUGH:
                assert after.lane_intent is LaneIntent.MIDDLE

    def test_preserves_count_and_instants(self):
        sched = self.make()
        for variant, reassignment in [
            (DesignVariant.EXTENDED_SHORT, Reassignment.NONE),
            (DesignVariant.RIGHT_TURN_ONLY, Reassignment.SCENARIO_I),
            (DesignVariant.ADDED_DIVERGE, Reassignment.NONE),
        ]:
            out = retarget_schedule(sched, variant, reassignment)
            assert len(out.events) == len(sched.events)
            assert [ev.time for ev in out.events] == [ev.time for ev in sched.events]

    def test_invalid_pairs_rejected(self):
        sched = self.make()
        with pytest.raises(InvalidConfigError):
            retarget_schedule(sched, DesignVariant.BASELINE, Reassignment.SCENARIO_I)
        with pytest.raises(InvalidConfigError):
            retarget_schedule(sched, DesignVariant.RIGHT_TURN_ONLY, Reassignment.NONE)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10**6), st.sampled_from(all_codes()))
def test_schedule_reproducibility_property(seed, code):
    flows = flows_for_code(code)
    assert generate_schedule(flows, seed, 200.0) == generate_schedule(flows, seed, 200.0)
