"""Seeded procedural generation of labeled highway scenario datasets.

Candidates are sampled per task family and accepted by rejection: the label
must be the only action any holding ladder rule demands, and holding the
labeled action for ten ticks must not collide. Labels come from the oracle
policy, so label consistency is by construction.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace
from pathlib import Path

from .policy import (
    PolicyConfig,
    decide,
    follow_distance,
    holding_rules,
    is_action_safe,
    map_instruction,
    pick_action,
    rule_compliant,
)
from .world import (
    CANONICAL_ACTIONS,
    LANE_WIDTH_M,
    TICK_SECONDS,
    Action,
    EgoState,
    LanePosition,
    Scenario,
    SurroundingVehicle,
    TaskFamily,
    TrafficRuleSet,
    in_collision,
    step_with_collisions,
)

VEHICLE_CATEGORIES = ("car", "truck", "bus", "van", "motorcycle")
SPEED_LIMITS_KMH = tuple(range(40, 121, 10))
MAX_REJECTIONS = 10_000
SAFETY_ROLLOUT_TICKS = 10
ORACLE_ROLLOUT_TICKS = 60

# Instruction phrases the generator draws from; each maps back onto its
# action through policy.map_instruction (asserted by tests).
INSTRUCTION_PHRASES: dict[Action, tuple[str, ...]] = {
    Action.ACCELERATE: ("please speed up", "speed up", "go faster"),
    Action.DECELERATE: ("please slow down", "slow down", "brake gently"),
    Action.CHANGE_LEFT: (
        "please overtake the car ahead",
        "overtake the vehicle in front",
        "change lane to the left",
    ),
    Action.CHANGE_RIGHT: (
        "change lane to the right",
        "return to the right lane",
        "move to the right lane",
    ),
    Action.MAINTAIN: ("keep going", "maintain your speed", "stay in this lane"),
}

# Labels each family can actually force: SADM has no binding speed limit
# (rules out accelerate), FTR keeps all vehicles far away (rules out the
# overtake label). The balance floor is enforced over these sets.
ACHIEVABLE_LABELS: dict[TaskFamily, tuple[Action, ...]] = {
    TaskFamily.SADM: (
        Action.MAINTAIN,
        Action.DECELERATE,
        Action.CHANGE_LEFT,
        Action.CHANGE_RIGHT,
    ),
    TaskFamily.FTR: (
        Action.MAINTAIN,
        Action.DECELERATE,
        Action.ACCELERATE,
        Action.CHANGE_RIGHT,
    ),
    TaskFamily.COMBINED: CANONICAL_ACTIONS,
}


class GenerationExhaustedError(RuntimeError):
    """Rejection sampling failed too many times in a row."""


class DatasetSchemaError(ValueError):
    """A dataset line that does not match the documented schema."""

    def __init__(self, line: int, field_name: str, message: str):
        super().__init__(f"line {line}: field {field_name!r}: {message}")
        self.line = line
        self.field = field_name


@dataclass(frozen=True)
class GenSpec:
    task_family: TaskFamily
    count: int
    seed: int
    misleading_instruction_prob: float = 0.5
    label_balance_floor: float = 0.05

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if not 0 <= self.misleading_instruction_prob <= 1:
            raise ValueError("misleading_instruction_prob must be in [0, 1]")
        if not 0 <= self.label_balance_floor <= 1:
            raise ValueError("label_balance_floor must be in [0, 1]")


def _lane_offset(ego_lane: LanePosition, vehicle_lane: LanePosition) -> float:
    """Lane-center lateral offset of a vehicle relative to the ego lane."""
    if vehicle_lane is ego_lane:
        return 0.0
    return -LANE_WIDTH_M if vehicle_lane is LanePosition.LEFT_OVERTAKING else LANE_WIDTH_M


def _vehicle(rng: random.Random, ego_lane: LanePosition, rel_y: float) -> SurroundingVehicle:
    lane = rng.choice((LanePosition.RIGHT_DRIVING, LanePosition.LEFT_OVERTAKING))
    return SurroundingVehicle(
        category=rng.choice(VEHICLE_CATEGORIES),
        rel_x=_lane_offset(ego_lane, lane),
        rel_y=rel_y,
        speed=float(rng.randrange(20, 131)),
    )


def _sample_spatial_vehicles(
    rng: random.Random, ego_lane: LanePosition, min_count: int, max_count: int
) -> tuple[SurroundingVehicle, ...]:
    count = rng.randint(min_count, max_count)
    return tuple(
        _vehicle(rng, ego_lane, float(rng.randrange(-80, 121))) for _ in range(count)
    )


def _sample_far_vehicles(
    rng: random.Random, ego_lane: LanePosition, ego_speed: float, config: PolicyConfig
) -> tuple[SurroundingVehicle, ...]:
    """Vehicles beyond twice the follow distance in both directions."""
    if rng.random() < 0.7:
        return ()
    margin = int(math.ceil(2 * follow_distance(config, ego_speed))) + 1
    vehicles = []
    for _ in range(rng.randint(1, 2)):
        ahead = rng.random() < 0.5
        if ahead and margin < 120:
            rel_y = float(rng.randrange(margin, 121))
        elif not ahead and margin < 80:
            rel_y = float(-rng.randrange(margin, 81))
        else:
            continue
        vehicles.append(_vehicle(rng, ego_lane, rel_y))
    return tuple(vehicles)


def _shaped_speed(rng: random.Random, limit: float | None) -> float:
    base = limit if limit is not None else float(rng.randrange(40, 121))
    offset = rng.choice((-30, -20, -10, -5, -3, -2, -1, 0, 1, 2, 3, 5, 10, 15, 20))
    speed = min(max(base + offset, 40.0), 120.0)
    if limit is not None:
        # Overspeed beyond two braking ticks cannot be fixed inside the
        # violation grace window, so cap it.
        speed = min(speed, limit + 20.0)
    return float(speed)


def _misleading_instruction(
    rng: random.Random, scenario: Scenario, config: PolicyConfig
) -> str | None:
    unsafe = [
        a
        for a in CANONICAL_ACTIONS
        if not (is_action_safe(scenario, a, config) and rule_compliant(scenario, a, config))
    ]
    if not unsafe:
        return None
    return rng.choice(INSTRUCTION_PHRASES[rng.choice(unsafe)])


def _sample_candidate(
    rng: random.Random,
    family: TaskFamily,
    config: PolicyConfig,
    seed: int,
    misleading_prob: float,
) -> Scenario:
    ego_lane = rng.choice((LanePosition.RIGHT_DRIVING, LanePosition.LEFT_OVERTAKING))
    instruction: str | None = None

    if family is TaskFamily.SADM:
        ego = EgoState(lane=ego_lane, speed=float(rng.randrange(40, 121)))
        rules = TrafficRuleSet()
        vehicles = _sample_spatial_vehicles(rng, ego_lane, 1, 4)
    elif family is TaskFamily.FTR:
        limit = float(rng.choice(SPEED_LIMITS_KMH)) if rng.random() < 0.8 else None
        ego = EgoState(lane=ego_lane, speed=_shaped_speed(rng, limit))
        rules = TrafficRuleSet(
            speed_limit=limit,
            keep_right=True,
            overtaking_allowed=rng.random() < 0.8,
        )
        vehicles = _sample_far_vehicles(rng, ego_lane, ego.speed, config)
    else:
        limit = float(rng.choice(SPEED_LIMITS_KMH)) if rng.random() < 0.8 else None
        ego = EgoState(lane=ego_lane, speed=_shaped_speed(rng, limit))
        rules = TrafficRuleSet(
            speed_limit=limit,
            keep_right=True,
            overtaking_allowed=rng.random() < 0.8,
        )
        vehicles = _sample_spatial_vehicles(rng, ego_lane, 0, 4)

    scenario = Scenario(
        id="",
        task_family=family,
        ego=ego,
        vehicles=vehicles,
        rules=rules,
        ground_truth=Action.MAINTAIN,
        seed=seed,
        instruction=None,
    )

    if family is TaskFamily.COMBINED:
        # Misleading with the spec probability, followable with half the
        # rest, no instruction otherwise.
        roll = rng.random()
        if roll < misleading_prob:
            instruction = _misleading_instruction(rng, scenario, config)
        elif roll < misleading_prob + (1 - misleading_prob) * 0.5:
            followable = [
                a
                for a in CANONICAL_ACTIONS
                if is_action_safe(scenario, a, config) and rule_compliant(scenario, a, config)
            ]
            if followable:
                instruction = rng.choice(INSTRUCTION_PHRASES[rng.choice(followable)])
        if instruction is not None:
            scenario = replace(scenario, instruction=instruction)
    return scenario


def _survives_constant_action(scenario: Scenario, action: Action) -> bool:
    ego, vehicles = scenario.ego, scenario.vehicles
    for _ in range(SAFETY_ROLLOUT_TICKS):
        ego, vehicles, hits = step_with_collisions(ego, vehicles, action, TICK_SECONDS)
        if hits:
            return False
    return True


def _oracle_rollout_clean(scenario: Scenario, config: PolicyConfig) -> bool:
    """Closed-loop oracle rollout stays collision- and violation-free.

    Surrounding traffic is non-reactive and the ladder never looks backward,
    so scenarios where rear traffic would plow into the ego are rejected
    here rather than blamed on the policy.
    """
    ego, vehicles = scenario.ego, scenario.vehicles
    limit = scenario.rules.speed_limit
    tolerance = config.limit_tolerance
    overspeed_streak = 0
    for tick in range(ORACLE_ROLLOUT_TICKS):
        snapshot = replace(scenario, ego=ego, vehicles=vehicles)
        action = pick_action(snapshot, config)
        ego, vehicles, hits = step_with_collisions(ego, vehicles, action, TICK_SECONDS)
        if hits:
            return False
        if limit is not None:
            if ego.speed > limit + tolerance:
                overspeed_streak += 1
                if overspeed_streak >= 2:
                    return False
            else:
                overspeed_streak = 0
    return True


def generate(spec: GenSpec, config: PolicyConfig | None = None) -> list[Scenario]:
    """Exactly spec.count labeled scenarios, deterministic per (spec, config)."""
    config = config or PolicyConfig()
    rng = random.Random(spec.seed)

    quota: dict[Action, int] = {}
    if spec.count >= 20 and spec.label_balance_floor > 0:
        per_label = math.ceil(spec.label_balance_floor * spec.count)
        quota = {label: per_label for label in ACHIEVABLE_LABELS[spec.task_family]}

    accepted: list[Scenario] = []
    have: dict[Action, int] = {}
    rejections = 0
    while len(accepted) < spec.count:
        candidate = _sample_candidate(
            rng, spec.task_family, config, spec.seed, spec.misleading_instruction_prob
        )
        fired = holding_rules(candidate, config)
        label = fired[0][1] if fired else Action.MAINTAIN
        # Cheap balance gate first: is this label still wanted?
        needed = {l: max(0, q - have.get(l, 0)) for l, q in quota.items()}
        free = spec.count - len(accepted) - sum(needed.values())
        ok = needed.get(label, 0) > 0 or free > 0
        ok = ok and _accept(candidate, label, fired, config)
        if not ok:
            rejections += 1
            if rejections >= MAX_REJECTIONS:
                raise GenerationExhaustedError(
                    f"{MAX_REJECTIONS} consecutive rejections for {spec}; "
                    "the spec and policy config are likely inconsistent"
                )
            continue
        rejections = 0
        index = len(accepted)
        scenario = replace(
            candidate,
            id=f"{spec.task_family.value}-s{spec.seed}-{index:04d}",
            ground_truth=label,
        )
        accepted.append(scenario)
        have[label] = have.get(label, 0) + 1
    return accepted


def instruction_is_misleading(scenario: Scenario, config: PolicyConfig) -> bool:
    """True when the instruction maps to an unsafe or rule-violating action."""
    mapped = map_instruction(scenario.instruction) if scenario.instruction else None
    if mapped is None:
        return False
    return not (
        is_action_safe(scenario, mapped, config) and rule_compliant(scenario, mapped, config)
    )


def _accept(
    scenario: Scenario,
    label: Action,
    fired: tuple[tuple[int, Action], ...],
    config: PolicyConfig,
) -> bool:
    """Acceptance predicate.

    Accepted scenarios have a unique label (no two holding ladder rules
    demand different actions), survive ten ticks of the labeled action, and
    stay clean under a full closed-loop oracle rollout.
    """
    if in_collision(scenario.ego, scenario.vehicles):
        return False
    if len({action for _, action in fired}) > 1:
        return False
    if not _survives_constant_action(scenario, label):
        return False
    return _oracle_rollout_clean(scenario, config)


# --- dataset serialization -------------------------------------------------

def scenario_to_json(scenario: Scenario) -> dict:
    return {
        "id": scenario.id,
        "task_family": scenario.task_family.value,
        "ego": {"lane": scenario.ego.lane.value, "speed_kmh": scenario.ego.speed},
        "vehicles": [
            {"category": v.category, "x_m": v.rel_x, "y_m": v.rel_y, "speed_kmh": v.speed}
            for v in scenario.vehicles
        ],
        "rules": {
            "speed_limit_kmh": scenario.rules.speed_limit,
            "keep_right": scenario.rules.keep_right,
            "overtaking_allowed": scenario.rules.overtaking_allowed,
            "extra": list(scenario.rules.extra_rules),
        },
        "instruction": scenario.instruction,
        "ground_truth": scenario.ground_truth.value,
        "seed": scenario.seed,
    }


_LANES_BY_NAME = {lane.value: lane for lane in LanePosition}
_ACTIONS_BY_NAME = {action.value: action for action in CANONICAL_ACTIONS}
_FAMILIES_BY_NAME = {family.value: family for family in TaskFamily}


def _require(obj: dict, key: str, line: int, types, prefix: str = "") -> object:
    field_name = f"{prefix}{key}"
    if key not in obj:
        raise DatasetSchemaError(line, field_name, "missing")
    value = obj[key]
    if not isinstance(value, types) or isinstance(value, bool) and bool not in _as_tuple(types):
        raise DatasetSchemaError(line, field_name, f"expected {types}, got {type(value).__name__}")
    return value


def _as_tuple(types) -> tuple:
    return types if isinstance(types, tuple) else (types,)


def scenario_from_json(obj: dict, line: int) -> Scenario:
    family_name = _require(obj, "task_family", line, str)
    if family_name not in _FAMILIES_BY_NAME:
        raise DatasetSchemaError(line, "task_family", f"unknown family {family_name!r}")
    ego_obj = _require(obj, "ego", line, dict)
    lane_name = _require(ego_obj, "lane", line, str, "ego.")
    if lane_name not in _LANES_BY_NAME:
        raise DatasetSchemaError(line, "ego.lane", f"unknown lane {lane_name!r}")
    speed = _require(ego_obj, "speed_kmh", line, (int, float), "ego.")
    vehicles = []
    for i, v in enumerate(_require(obj, "vehicles", line, list)):
        if not isinstance(v, dict):
            raise DatasetSchemaError(line, f"vehicles[{i}]", "expected object")
        prefix = f"vehicles[{i}]."
        vehicles.append(
            SurroundingVehicle(
                category=_require(v, "category", line, str, prefix),
                rel_x=float(_require(v, "x_m", line, (int, float), prefix)),
                rel_y=float(_require(v, "y_m", line, (int, float), prefix)),
                speed=float(_require(v, "speed_kmh", line, (int, float), prefix)),
            )
        )
    rules_obj = _require(obj, "rules", line, dict)
    if "speed_limit_kmh" not in rules_obj:
        raise DatasetSchemaError(line, "rules.speed_limit_kmh", "missing")
    limit = rules_obj["speed_limit_kmh"]
    if limit is not None and not isinstance(limit, (int, float)):
        raise DatasetSchemaError(line, "rules.speed_limit_kmh", "expected number or null")
    ground_truth = _require(obj, "ground_truth", line, str)
    if ground_truth not in _ACTIONS_BY_NAME:
        raise DatasetSchemaError(line, "ground_truth", f"unknown action {ground_truth!r}")
    instruction = obj.get("instruction")
    if instruction is not None and not isinstance(instruction, str):
        raise DatasetSchemaError(line, "instruction", "expected string or null")
    return Scenario(
        id=str(_require(obj, "id", line, str)),
        task_family=_FAMILIES_BY_NAME[family_name],
        ego=EgoState(lane=_LANES_BY_NAME[lane_name], speed=float(speed)),
        vehicles=tuple(vehicles),
        rules=TrafficRuleSet(
            speed_limit=float(limit) if limit is not None else None,
            keep_right=bool(_require(rules_obj, "keep_right", line, bool, "rules.")),
            overtaking_allowed=bool(
                _require(rules_obj, "overtaking_allowed", line, bool, "rules.")
            ),
            extra_rules=tuple(_require(rules_obj, "extra", line, list, "rules.")),
        ),
        ground_truth=_ACTIONS_BY_NAME[ground_truth],
        seed=int(_require(obj, "seed", line, int)),
        instruction=instruction,
    )


def write_dataset(scenarios: list[Scenario], path: str | Path) -> None:
    """One JSON object per line in the documented schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for scenario in scenarios:
            fh.write(json.dumps(scenario_to_json(scenario)) + "\n")


def read_dataset(path: str | Path) -> list[Scenario]:
    """Parse a dataset file, raising DatasetSchemaError with line numbers."""
    scenarios = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetSchemaError(line_no, "<json>", str(exc)) from exc
            if not isinstance(obj, dict):
                raise DatasetSchemaError(line_no, "<json>", "expected an object")
            scenarios.append(scenario_from_json(obj, line_no))
    return scenarios


def label_histogram(scenarios: list[Scenario]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for scenario in scenarios:
        counts[scenario.ground_truth.value] = counts.get(scenario.ground_truth.value, 0) + 1
    return {action.value: counts.get(action.value, 0) for action in CANONICAL_ACTIONS}
