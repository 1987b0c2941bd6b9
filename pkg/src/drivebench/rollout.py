"""Closed-loop execution: render -> drive -> parse -> step, with violation scan."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path

from .drivers import DriverRequest, decision_payload
from .policy import PolicyConfig, target_lane_for
from .prompts import Decision, ParseError, PromptConfig, render_prompt
from .world import (
    LANE_CHANGE_ACTIONS,
    TICK_SECONDS,
    Action,
    EgoState,
    LanePosition,
    Scenario,
    SurroundingVehicle,
    TrafficRuleSet,
    lane_of,
    step_with_collisions,
)


class RolloutTerminal(enum.Enum):
    COMPLETED = "completed"
    COLLISION = "collision"
    PARSE_FAILURE = "parse_failure"


class ViolationKind(enum.Enum):
    SPEED_LIMIT_EXCEEDED = "speed_limit_exceeded"
    UNSAFE_LANE_CHANGE = "unsafe_lane_change"
    OFF_ROAD_LANE_CHANGE = "off_road_lane_change"
    COLLISION = "collision"


@dataclass(frozen=True)
class ViolationEvent:
    kind: ViolationKind
    tick: int
    detail: str

    def __post_init__(self) -> None:
        if not self.detail:
            raise ValueError("violation detail must be non-empty")


@dataclass(frozen=True)
class TickRecord:
    tick_index: int
    ego: EgoState
    vehicles: tuple[SurroundingVehicle, ...]
    decision: Decision | ParseError
    events: tuple[ViolationEvent, ...]


@dataclass(frozen=True)
class RolloutTrace:
    scenario_id: str
    ticks: tuple[TickRecord, ...]
    terminal: RolloutTerminal


def rollout(
    scenario: Scenario,
    driver,
    steps: int,
    dt: float = TICK_SECONDS,
    prompt_cfg: PromptConfig | None = None,
) -> RolloutTrace:
    """Run a driver closed-loop for up to `steps` ticks.

    Each tick re-renders the evolved world as a scenario snapshot; a parse
    failure falls back to "maintain" and is recorded. Stops early on
    collision.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    prompt_cfg = prompt_cfg or PromptConfig()
    ego, vehicles = scenario.ego, scenario.vehicles
    ticks: list[TickRecord] = []
    saw_parse_failure = False
    collided = False
    for t in range(steps):
        snapshot = replace(scenario, ego=ego, vehicles=vehicles)
        prompt = render_prompt(snapshot, prompt_cfg)
        transcript = driver.drive(
            DriverRequest(
                scenario=snapshot,
                prompt=prompt,
                cfg=prompt_cfg,
                session_id=f"rollout-{scenario.id}",
            )
        )
        parsed = transcript.parsed
        if isinstance(parsed, Decision):
            action = parsed.action
        else:
            saw_parse_failure = True
            action = Action.MAINTAIN
        next_ego, next_vehicles, hits = step_with_collisions(ego, vehicles, action, dt)
        events = tuple(
            ViolationEvent(
                ViolationKind.COLLISION,
                t,
                f"collision with {v.category} at y={v.rel_y:.1f} m",
            )
            for v in hits
        )
        ticks.append(TickRecord(t, ego, vehicles, parsed, events))
        if hits:
            collided = True
            break
        ego, vehicles = next_ego, next_vehicles
    if collided:
        terminal = RolloutTerminal.COLLISION
    elif saw_parse_failure:
        terminal = RolloutTerminal.PARSE_FAILURE
    else:
        terminal = RolloutTerminal.COMPLETED
    return RolloutTrace(scenario.id, tuple(ticks), terminal)


def detect_violations(
    trace: RolloutTrace, rules: TrafficRuleSet, config: PolicyConfig
) -> list[ViolationEvent]:
    """Scan a trace for rule violations.

    Overspeed is only flagged when it persists for two consecutive ticks
    after the first decision took effect, so scenarios that legitimately
    start above the limit get a grace window to brake.
    """
    events: list[ViolationEvent] = []
    for tick in trace.ticks:
        events.extend(tick.events)
    limit = rules.speed_limit
    if limit is not None:
        streak = 0
        for tick in trace.ticks[1:]:
            if tick.ego.speed > limit + config.limit_tolerance:
                streak += 1
                if streak == 2:
                    events.append(
                        ViolationEvent(
                            ViolationKind.SPEED_LIMIT_EXCEEDED,
                            tick.tick_index,
                            f"speed {tick.ego.speed:g} km/h above limit {limit:g} km/h "
                            "for two consecutive ticks",
                        )
                    )
            else:
                streak = 0
    env = config.envelope
    for tick in trace.ticks:
        d = tick.decision
        if not isinstance(d, Decision) or d.action not in LANE_CHANGE_ACTIONS:
            continue
        target = target_lane_for(d.action, tick.ego.lane)
        if target is None:
            events.append(
                ViolationEvent(
                    ViolationKind.OFF_ROAD_LANE_CHANGE,
                    tick.tick_index,
                    f"'{d.action.value}' from the {tick.ego.lane.value} lane leaves the road",
                )
            )
            continue
        occupied = [
            v
            for v in tick.vehicles
            if lane_of(tick.ego.lane, v.rel_x) is target
            and -env.rear_clear <= v.rel_y <= env.front_clear
        ]
        if occupied:
            events.append(
                ViolationEvent(
                    ViolationKind.UNSAFE_LANE_CHANGE,
                    tick.tick_index,
                    f"target lane occupied at y={occupied[0].rel_y:g} m during "
                    f"'{d.action.value}'",
                )
            )
    events.sort(key=lambda e: (e.tick, e.kind.value))
    return events


# --- trace serialization -----------------------------------------------------

def _tick_to_json(tick: TickRecord) -> dict:
    return {
        "type": "tick",
        "tick_index": tick.tick_index,
        "ego": {
            "lane": tick.ego.lane.value,
            "speed_kmh": tick.ego.speed,
            "odometer_m": tick.ego.odometer,
        },
        "vehicles": [
            {"category": v.category, "x_m": v.rel_x, "y_m": v.rel_y, "speed_kmh": v.speed}
            for v in tick.vehicles
        ],
        **decision_payload(tick.decision),
        "events": [
            {"kind": e.kind.value, "tick": e.tick, "detail": e.detail} for e in tick.events
        ],
    }


def write_trace(trace: RolloutTrace, path: str | Path) -> None:
    """Meta line followed by one tick per line."""
    with open(path, "w", encoding="utf-8") as fh:
        meta = {
            "type": "meta",
            "scenario_id": trace.scenario_id,
            "terminal": trace.terminal.value,
            "ticks": len(trace.ticks),
        }
        fh.write(json.dumps(meta) + "\n")
        for tick in trace.ticks:
            fh.write(json.dumps(_tick_to_json(tick)) + "\n")


def _decision_from_json(obj: dict) -> Decision | ParseError:
    if "decision" in obj:
        d = obj["decision"]
        return Decision(action=Action(d["action"]), reason=d.get("reason"))
    e = obj["error"]
    return ParseError(kind=e["kind"], detail=e.get("detail", ""), position=e.get("position"))


def read_trace(path: str | Path) -> RolloutTrace:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("type") != "meta":
        raise ValueError(f"{path} is not a rollout trace (missing meta line)")
    meta = lines[0]
    ticks = []
    for obj in lines[1:]:
        ticks.append(
            TickRecord(
                tick_index=obj["tick_index"],
                ego=EgoState(
                    lane=LanePosition(obj["ego"]["lane"]),
                    speed=obj["ego"]["speed_kmh"],
                    odometer=obj["ego"]["odometer_m"],
                ),
                vehicles=tuple(
                    SurroundingVehicle(
                        category=v["category"],
                        rel_x=v["x_m"],
                        rel_y=v["y_m"],
                        speed=v["speed_kmh"],
                    )
                    for v in obj["vehicles"]
                ),
                decision=_decision_from_json(obj),
                events=tuple(
                    ViolationEvent(ViolationKind(e["kind"]), e["tick"], e["detail"])
                    for e in obj["events"]
                ),
            )
        )
    return RolloutTrace(meta["scenario_id"], tuple(ticks), RolloutTerminal(meta["terminal"]))
