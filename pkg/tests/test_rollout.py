import pytest

from drivebench.datasets import GenSpec, generate
from drivebench.drivers import ConstantDriver, OracleDriver, ReplayDriver
from drivebench.prompts import ParseError, PromptConfig
from drivebench.rollout import (
    RolloutTerminal,
    ViolationEvent,
    ViolationKind,
    detect_violations,
    read_trace,
    rollout,
    write_trace,
)
from drivebench.world import Action, TaskFamily, TrafficRuleSet

from conftest import LEFT, RIGHT, scenario, vehicle


class TestRollout:
    def test_empty_road_oracle_completes(self, config):
        trace = rollout(scenario(), OracleDriver(config), steps=10)
        assert trace.terminal is RolloutTerminal.COMPLETED
        assert len(trace.ticks) == 10
        assert all(not t.events for t in trace.ticks)

    def test_stubborn_maintain_collides_within_two_ticks(self, config):
        # Lead 12 m ahead closing at 30 km/h (8.33 m/s): the 5 m collision
        # threshold is crossed on the first tick.
        s = scenario(
            ego_speed=80.0,
            vehicles=(vehicle(RIGHT, RIGHT, rel_y=12.0, speed=50.0),),
        )
        trace = rollout(s, ConstantDriver(Action.MAINTAIN), steps=10)
        assert trace.terminal is RolloutTerminal.COLLISION
        assert len(trace.ticks) <= 2
        assert trace.ticks[-1].events
        assert trace.ticks[-1].events[0].kind is ViolationKind.COLLISION

    def test_same_scenario_oracle_avoids_collision(self, config):
        s = scenario(
            ego_speed=80.0,
            vehicles=(vehicle(RIGHT, RIGHT, rel_y=12.0, speed=50.0),),
        )
        trace = rollout(s, OracleDriver(config), steps=10)
        assert trace.terminal is RolloutTerminal.COMPLETED

    def test_tick_indices_strictly_increase(self, config):
        trace = rollout(scenario(), OracleDriver(config), steps=7)
        assert [t.tick_index for t in trace.ticks] == list(range(7))

    def test_parse_failure_falls_back_to_maintain(self):
        s = scenario(ego_speed=70.0)
        driver = ReplayDriver({s.id: "no json here"})
        trace = rollout(s, driver, steps=3)
        assert trace.terminal is RolloutTerminal.PARSE_FAILURE
        assert all(isinstance(t.decision, ParseError) for t in trace.ticks)
        # Maintain fallback: speed untouched.
        assert trace.ticks[-1].ego.speed == 70.0

    def test_steps_precondition(self, config):
        with pytest.raises(ValueError):
            rollout(scenario(), OracleDriver(config), steps=0)

    def test_deterministic_with_deterministic_driver(self, config):
        s = scenario(
            ego_speed=90.0,
            vehicles=(vehicle(RIGHT, RIGHT, rel_y=60.0, speed=70.0),),
            rules=TrafficRuleSet(speed_limit=100.0),
        )
        a = rollout(s, OracleDriver(config), steps=20)
        b = rollout(s, OracleDriver(config), steps=20)
        assert a == b


class TestDetectViolations:
    def test_oracle_rollouts_are_clean(self, config):
        scenarios = generate(GenSpec(task_family=TaskFamily.COMBINED, count=20, seed=21), config)
        driver = OracleDriver(config)
        for s in scenarios:
            trace = rollout(s, driver, steps=30)
            assert detect_violations(trace, s.rules, config) == []

    def test_constant_accelerate_under_limit_is_flagged(self, config):
        s = scenario(ego_speed=70.0, rules=TrafficRuleSet(speed_limit=70.0))
        trace = rollout(s, ConstantDriver(Action.ACCELERATE), steps=10)
        violations = detect_violations(trace, s.rules, config)
        assert any(v.kind is ViolationKind.SPEED_LIMIT_EXCEEDED for v in violations)

    def test_initial_overspeed_grace(self, config):
        # Starts 15 km/h over; the oracle brakes it inside the grace window.
        s = scenario(ego_speed=85.0, rules=TrafficRuleSet(speed_limit=70.0))
        trace = rollout(s, OracleDriver(config), steps=10)
        assert detect_violations(trace, s.rules, config) == []

    def test_unsafe_lane_change_flagged(self, config):
        s = scenario(
            ego_lane=RIGHT,
            ego_speed=70.0,
            vehicles=(vehicle(LEFT, RIGHT, rel_y=0.0, speed=70.0),),
        )
        trace = rollout(s, ConstantDriver(Action.CHANGE_LEFT), steps=1)
        violations = detect_violations(trace, s.rules, config)
        assert any(v.kind is ViolationKind.UNSAFE_LANE_CHANGE for v in violations)

    def test_off_road_change_flagged(self, config):
        s = scenario(ego_lane=RIGHT, ego_speed=70.0)
        trace = rollout(s, ConstantDriver(Action.CHANGE_RIGHT), steps=2)
        violations = detect_violations(trace, s.rules, config)
        assert sum(1 for v in violations if v.kind is ViolationKind.OFF_ROAD_LANE_CHANGE) == 2

    def test_collision_mirrored(self, config):
        s = scenario(
            ego_speed=80.0,
            vehicles=(vehicle(RIGHT, RIGHT, rel_y=12.0, speed=50.0),),
        )
        trace = rollout(s, ConstantDriver(Action.MAINTAIN), steps=10)
        violations = detect_violations(trace, s.rules, config)
        assert any(v.kind is ViolationKind.COLLISION for v in violations)

    def test_event_detail_non_empty(self):
        with pytest.raises(ValueError):
            ViolationEvent(ViolationKind.COLLISION, 0, "")


class TestTraceIO:
    def test_round_trip(self, config, tmp_path):
        s = scenario(
            ego_speed=90.0,
            vehicles=(vehicle(RIGHT, RIGHT, rel_y=40.0, speed=60.0),),
            rules=TrafficRuleSet(speed_limit=100.0),
        )
        trace = rollout(s, OracleDriver(config), steps=15)
        path = tmp_path / "trace.jsonl"
        write_trace(trace, path)
        assert read_trace(path) == trace

    def test_round_trip_with_parse_errors(self, tmp_path):
        s = scenario()
        trace = rollout(s, ReplayDriver({s.id: "garbage"}), steps=3)
        path = tmp_path / "trace.jsonl"
        write_trace(trace, path)
        assert read_trace(path) == trace

    def test_byte_deterministic(self, config, tmp_path):
        s = scenario(ego_speed=70.0)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_trace(rollout(s, OracleDriver(config), steps=10), p1)
        write_trace(rollout(s, OracleDriver(config), steps=10), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_not_a_trace(self, tmp_path):
        path = tmp_path / "no.jsonl"
        path.write_text('{"type": "tick"}\n')
        with pytest.raises(ValueError):
            read_trace(path)
