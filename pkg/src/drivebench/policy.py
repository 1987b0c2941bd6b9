"""Deterministic rule-ladder driving policy.

The ladder is strictly ordered, so every scenario has exactly one answer:
safety and posted rules dominate, user instructions are obeyed only when
safe and rule-compliant, speed recovery comes last.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .world import (
    ACCELERATE_DELTA_KMH,
    TICK_SECONDS,
    Action,
    Decision,
    LanePosition,
    Scenario,
    gap_ahead,
    kmh_to_mps,
    lane_of,
    step_kinematics,
    time_to_collision,
)


@dataclass(frozen=True)
class SafetyEnvelope:
    """Longitudinal clearance a target lane must satisfy before a lane change."""

    rear_clear: float = 10.0  # m behind ego
    front_clear: float = 15.0  # m ahead of ego
    rear_closing_margin: float = 10.0  # km/h of rear overtake speed tolerated

    def __post_init__(self) -> None:
        for name in ("rear_clear", "front_clear", "rear_closing_margin"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class PolicyConfig:
    headway: float = 2.0  # s, safe-following time gap
    min_gap: float = 10.0  # m, floor under the headway distance
    limit_tolerance: float = 2.0  # km/h dead-band around the speed limit
    envelope: SafetyEnvelope = field(default_factory=SafetyEnvelope)

    def __post_init__(self) -> None:
        if self.headway <= 0 or self.min_gap <= 0 or self.limit_tolerance < 0:
            raise ValueError("headway and min_gap must be > 0, limit_tolerance >= 0")


def follow_distance(config: PolicyConfig, ego_speed_kmh: float) -> float:
    """Safe following distance in meters: headway seconds with a floor."""
    return max(config.min_gap, config.headway * kmh_to_mps(ego_speed_kmh))


def target_lane_for(action: Action, lane: LanePosition) -> LanePosition | None:
    """Target lane of a lane-change action, or None when it points off-road."""
    if action is Action.CHANGE_LEFT and lane is LanePosition.RIGHT_DRIVING:
        return LanePosition.LEFT_OVERTAKING
    if action is Action.CHANGE_RIGHT and lane is LanePosition.LEFT_OVERTAKING:
        return LanePosition.RIGHT_DRIVING
    return None


def is_action_safe(scenario: Scenario, action: Action, config: PolicyConfig) -> bool:
    """Hard safety check: lane-change envelopes and accelerate-into-lead TTC."""
    ego = scenario.ego
    env = config.envelope
    if action in (Action.CHANGE_LEFT, Action.CHANGE_RIGHT):
        target = target_lane_for(action, ego.lane)
        if target is None:
            return False
        for v in scenario.vehicles:
            if lane_of(ego.lane, v.rel_x) is not target:
                continue
            if -env.rear_clear <= v.rel_y <= env.front_clear:
                return False
            if (
                -2 * env.rear_clear <= v.rel_y < 0
                and v.speed > ego.speed + env.rear_closing_margin
            ):
                return False
        return True
    if action is Action.ACCELERATE:
        next_ego, next_vehicles = step_kinematics(
            ego, scenario.vehicles, Action.ACCELERATE, TICK_SECONDS
        )
        lead = gap_ahead(next_ego, next_vehicles)
        if lead is not None:
            ttc = time_to_collision(next_ego, lead[0])
            if ttc is not None and ttc < config.headway:
                return False
        return True
    return True


# Ordered phrase table for the closed instruction grammar; first match wins.
# Matched on whitespace-collapsed, case-folded text with word boundaries.
_INSTRUCTION_TABLE: tuple[tuple[str, Action], ...] = (
    ("change lane to the left", Action.CHANGE_LEFT),
    ("change lane to the right", Action.CHANGE_RIGHT),
    ("change to the left lane", Action.CHANGE_LEFT),
    ("change to the right lane", Action.CHANGE_RIGHT),
    ("move to the left lane", Action.CHANGE_LEFT),
    ("move to the right lane", Action.CHANGE_RIGHT),
    ("take the left lane", Action.CHANGE_LEFT),
    ("take the right lane", Action.CHANGE_RIGHT),
    ("return to the right lane", Action.CHANGE_RIGHT),
    ("keep going", Action.MAINTAIN),
    ("keep your speed", Action.MAINTAIN),
    ("maintain your speed", Action.MAINTAIN),
    ("maintain speed", Action.MAINTAIN),
    ("stay in this lane", Action.MAINTAIN),
    ("speed up", Action.ACCELERATE),
    ("go faster", Action.ACCELERATE),
    ("accelerate", Action.ACCELERATE),
    ("slow down", Action.DECELERATE),
    ("decelerate", Action.DECELERATE),
    ("brake", Action.DECELERATE),
    ("overtake", Action.CHANGE_LEFT),
    ("pass the car", Action.CHANGE_LEFT),
    ("pass the vehicle", Action.CHANGE_LEFT),
)


def map_instruction(instruction: str) -> Action | None:
    """Map free text onto an action via the closed grammar, or None."""
    if not instruction:
        return None
    text = " ".join(instruction.split()).casefold()
    for phrase, action in _INSTRUCTION_TABLE:
        if re.search(rf"\b{re.escape(phrase)}\b", text):
            return action
    return None


def rule_compliant(scenario: Scenario, action: Action, config: PolicyConfig) -> bool:
    """Whether an action respects the scenario's structured traffic rules."""
    rules = scenario.rules
    if action is Action.ACCELERATE and rules.speed_limit is not None:
        return scenario.ego.speed + ACCELERATE_DELTA_KMH <= rules.speed_limit + config.limit_tolerance
    if action is Action.CHANGE_LEFT:
        return rules.overtaking_allowed
    return True


def holding_rules(scenario: Scenario, config: PolicyConfig) -> tuple[tuple[int, Action], ...]:
    """Every ladder rule whose condition holds, with the action it demands.

    decide() takes the lowest-index entry; the scenario generator rejects
    candidates where two holding rules demand different actions.
    """
    ego, rules = scenario.ego, scenario.rules
    fired: list[tuple[int, Action]] = []
    fd = follow_distance(config, ego.speed)
    lead = gap_ahead(ego, scenario.vehicles)
    limit = rules.speed_limit

    if limit is not None and ego.speed > limit + config.limit_tolerance:
        fired.append((1, Action.DECELERATE))
    if lead is not None and lead[1] < fd:
        if rules.overtaking_allowed and is_action_safe(scenario, Action.CHANGE_LEFT, config):
            fired.append((2, Action.CHANGE_LEFT))
        else:
            fired.append((2, Action.DECELERATE))
    if rules.keep_right and ego.lane is LanePosition.LEFT_OVERTAKING:
        blocked = any(
            0 < v.rel_y <= fd
            and v.speed < ego.speed
            and lane_of(ego.lane, v.rel_x) is LanePosition.RIGHT_DRIVING
            for v in scenario.vehicles
        )
        if not blocked and is_action_safe(scenario, Action.CHANGE_RIGHT, config):
            fired.append((3, Action.CHANGE_RIGHT))
    if scenario.instruction:
        mapped = map_instruction(scenario.instruction)
        if (
            mapped is not None
            and is_action_safe(scenario, mapped, config)
            and rule_compliant(scenario, mapped, config)
        ):
            fired.append((4, mapped))
    if (
        limit is not None
        and ego.speed < limit - config.limit_tolerance
        and (lead is None or lead[1] >= 2 * fd)
    ):
        fired.append((5, Action.ACCELERATE))
    return tuple(fired)


def pick_action(scenario: Scenario, config: PolicyConfig) -> Action:
    """The ladder's action without the templated reason (hot-loop variant)."""
    fired = holding_rules(scenario, config)
    return fired[0][1] if fired else Action.MAINTAIN


def decide(scenario: Scenario, config: PolicyConfig | None = None) -> Decision:
    """Deterministic decision: first holding ladder rule, else maintain."""
    config = config or PolicyConfig()
    fired = holding_rules(scenario, config)
    rule, action = fired[0] if fired else (6, Action.MAINTAIN)
    return Decision(action=action, reason=explain(rule, scenario, config))


def _fmt(value: float) -> str:
    return f"{value:g}"


def explain(ladder_rule: int, scenario: Scenario, config: PolicyConfig | None = None) -> str:
    """Templated one-sentence rationale for a fired ladder rule."""
    if not 1 <= ladder_rule <= 6:
        raise ValueError(f"ladder rule must be in [1, 6], got {ladder_rule}")
    config = config or PolicyConfig()
    ego, rules = scenario.ego, scenario.rules
    fd = follow_distance(config, ego.speed)
    lead = gap_ahead(ego, scenario.vehicles)
    if ladder_rule == 1:
        return (
            f"Speed {_fmt(ego.speed)} km/h is above the {_fmt(rules.speed_limit)} km/h "
            "speed limit, so decelerate to comply."
        )
    if ladder_rule == 2:
        gap = _fmt(lead[1]) if lead is not None else "small"
        if rules.overtaking_allowed and is_action_safe(scenario, Action.CHANGE_LEFT, config):
            return (
                f"Lead vehicle only {gap} m ahead (safe follow distance {_fmt(fd)} m) "
                "and the overtaking lane is clear, so change lane to the left."
            )
        return (
            f"Lead vehicle only {gap} m ahead (safe follow distance {_fmt(fd)} m) "
            "and overtaking is not possible, so decelerate."
        )
    if ladder_rule == 3:
        return (
            "Keep-right applies: the overtaking lane is no longer needed and the "
            "driving lane is clear, so change lane to the right."
        )
    if ladder_rule == 4:
        return (
            f"The instruction '{scenario.instruction}' is safe and rule-compliant, "
            "so follow it."
        )
    if ladder_rule == 5:
        return (
            f"Speed {_fmt(ego.speed)} km/h is below the {_fmt(rules.speed_limit)} km/h "
            "speed limit and the road ahead is clear, so accelerate."
        )
    return "No constraint fired; maintaining current speed and lane."


def strip_instruction(scenario: Scenario) -> Scenario:
    """The same scenario without its user instruction."""
    return replace(scenario, instruction=None)
