"""Shared builders for tests: hand-rolled scenarios and a random sampler."""

from __future__ import annotations

import random

import pytest

from drivebench.policy import PolicyConfig
from drivebench.world import (
    LANE_WIDTH_M,
    Action,
    EgoState,
    LanePosition,
    Scenario,
    SurroundingVehicle,
    TaskFamily,
    TrafficRuleSet,
)

RIGHT = LanePosition.RIGHT_DRIVING
LEFT = LanePosition.LEFT_OVERTAKING


def vehicle(lane: LanePosition, ego_lane: LanePosition, rel_y: float, speed: float,
            category: str = "car") -> SurroundingVehicle:
    """A vehicle placed at the center of `lane`, relative to `ego_lane`."""
    if lane is ego_lane:
        rel_x = 0.0
    elif lane is LEFT:
        rel_x = -LANE_WIDTH_M
    else:
        rel_x = LANE_WIDTH_M
    return SurroundingVehicle(category=category, rel_x=rel_x, rel_y=rel_y, speed=speed)


def scenario(
    ego_lane: LanePosition = RIGHT,
    ego_speed: float = 70.0,
    vehicles: tuple[SurroundingVehicle, ...] = (),
    rules: TrafficRuleSet | None = None,
    instruction: str | None = None,
    ground_truth: Action = Action.MAINTAIN,
    scenario_id: str = "test-0000",
) -> Scenario:
    return Scenario(
        id=scenario_id,
        task_family=TaskFamily.SADM,
        ego=EgoState(lane=ego_lane, speed=ego_speed),
        vehicles=vehicles,
        rules=rules or TrafficRuleSet(),
        ground_truth=ground_truth,
        seed=0,
        instruction=instruction,
    )


def random_scenario(rng: random.Random) -> Scenario:
    """Unconstrained but type-valid scenario for property sweeps."""
    ego_lane = rng.choice((RIGHT, LEFT))
    n = rng.randint(0, 4)
    vehicles = tuple(
        vehicle(
            rng.choice((RIGHT, LEFT)),
            ego_lane,
            rel_y=float(rng.randint(-80, 120)),
            speed=float(rng.randint(0, 130)),
            category=rng.choice(("car", "truck", "bus")),
        )
        for _ in range(n)
    )
    limit = float(rng.choice(range(40, 121, 10))) if rng.random() < 0.6 else None
    instruction = None
    if rng.random() < 0.5:
        instruction = rng.choice(
            (
                "speed up",
                "slow down",
                "overtake the car ahead",
                "change lane to the right",
                "change lane to the left",
                "keep going",
                "do a barrel roll",
            )
        )
    return scenario(
        ego_lane=ego_lane,
        ego_speed=float(rng.randint(0, 130)),
        vehicles=vehicles,
        rules=TrafficRuleSet(
            speed_limit=limit,
            keep_right=rng.random() < 0.8,
            overtaking_allowed=rng.random() < 0.8,
        ),
        instruction=instruction,
    )


@pytest.fixture
def config() -> PolicyConfig:
    return PolicyConfig()
