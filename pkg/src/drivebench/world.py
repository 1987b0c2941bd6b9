"""Two-lane highway world: immutable state types and per-tick kinematics.

Coordinates are ego-centered: x is lateral in meters (right-positive),
y is longitudinal in meters (forward-positive). Speeds are km/h everywhere
visible; conversion to m/s happens only inside the arithmetic here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

LANE_WIDTH_M = 3.5
ACCELERATE_DELTA_KMH = 5.0
DECELERATE_DELTA_KMH = 10.0
TICK_SECONDS = 1.0
MAX_SPEED_KMH = 130.0
VEHICLE_LENGTH_M = 5.0


def kmh_to_mps(speed_kmh: float) -> float:
    return speed_kmh * (1000.0 / 3600.0)


class LanePosition(enum.Enum):
    """The two lanes: right for driving, left for overtaking."""

    RIGHT_DRIVING = "right"
    LEFT_OVERTAKING = "left"

    @property
    def other(self) -> "LanePosition":
        if self is LanePosition.RIGHT_DRIVING:
            return LanePosition.LEFT_OVERTAKING
        return LanePosition.RIGHT_DRIVING


class Action(enum.Enum):
    ACCELERATE = "accelerate"
    MAINTAIN = "maintain"
    DECELERATE = "decelerate"
    CHANGE_RIGHT = "change lane to the right"
    CHANGE_LEFT = "change lane to the left"


CANONICAL_ACTIONS: tuple[Action, ...] = (
    Action.ACCELERATE,
    Action.MAINTAIN,
    Action.DECELERATE,
    Action.CHANGE_RIGHT,
    Action.CHANGE_LEFT,
)

LANE_CHANGE_ACTIONS = (Action.CHANGE_RIGHT, Action.CHANGE_LEFT)


class TaskFamily(enum.Enum):
    SADM = "sadm"
    FTR = "ftr"
    COMBINED = "combined"


class OffRoadError(ValueError):
    """A lateral offset that does not map onto either lane."""


@dataclass(frozen=True)
class EgoState:
    lane: LanePosition
    speed: float  # km/h
    odometer: float = 0.0  # m, never decreases across ticks

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValueError(f"ego speed must be >= 0, got {self.speed}")
        if self.odometer < 0:
            raise ValueError(f"odometer must be >= 0, got {self.odometer}")


@dataclass(frozen=True)
class SurroundingVehicle:
    category: str
    rel_x: float  # m, lateral offset from ego, right-positive
    rel_y: float  # m, longitudinal offset from ego, forward-positive
    speed: float  # km/h

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValueError(f"vehicle speed must be >= 0, got {self.speed}")
        if abs(self.rel_x) > 1.5 * LANE_WIDTH_M:
            raise ValueError(f"rel_x={self.rel_x} is beyond the road edge")


@dataclass(frozen=True)
class TrafficRuleSet:
    speed_limit: float | None = None  # km/h
    keep_right: bool = True
    overtaking_allowed: bool = True
    extra_rules: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.speed_limit is not None and not 10 <= self.speed_limit <= 200:
            raise ValueError(f"speed limit must be in [10, 200] km/h, got {self.speed_limit}")


@dataclass(frozen=True)
class Decision:
    action: Action
    reason: str | None = None


@dataclass(frozen=True)
class Scenario:
    id: str
    task_family: TaskFamily
    ego: EgoState
    vehicles: tuple[SurroundingVehicle, ...]
    rules: TrafficRuleSet
    ground_truth: Action
    seed: int
    instruction: str | None = None


def lane_of(ego_lane: LanePosition, rel_x: float) -> LanePosition:
    """Assign a lateral offset to a lane, given the lane the ego occupies.

    Raises OffRoadError when the offset falls outside the two-lane road or
    points past its edge.
    """
    if abs(rel_x) > 1.5 * LANE_WIDTH_M:
        raise OffRoadError(f"rel_x={rel_x} is beyond the road edge")
    if abs(rel_x) < LANE_WIDTH_M / 2:
        return ego_lane
    if ego_lane is LanePosition.RIGHT_DRIVING and rel_x > 0:
        raise OffRoadError(f"rel_x={rel_x} points right of the driving lane")
    if ego_lane is LanePosition.LEFT_OVERTAKING and rel_x < 0:
        raise OffRoadError(f"rel_x={rel_x} points left of the overtaking lane")
    return ego_lane.other


_SPEED_DELTAS = {
    Action.ACCELERATE: ACCELERATE_DELTA_KMH,
    Action.DECELERATE: -DECELERATE_DELTA_KMH,
}


def lane_after(lane: LanePosition, action: Action) -> LanePosition:
    """Lane occupied after an action; illegal-direction changes are a no-op."""
    if action is Action.CHANGE_LEFT and lane is LanePosition.RIGHT_DRIVING:
        return LanePosition.LEFT_OVERTAKING
    if action is Action.CHANGE_RIGHT and lane is LanePosition.LEFT_OVERTAKING:
        return LanePosition.RIGHT_DRIVING
    return lane


def _closest_approach(before: float, after: float) -> float:
    # Linear motion within a tick: if the offset changes sign the vehicle
    # passed through the ego position.
    if (before > 0) != (after > 0) or before == 0 or after == 0:
        return 0.0
    return min(abs(before), abs(after))


def step_with_collisions(
    ego: EgoState,
    vehicles: tuple[SurroundingVehicle, ...],
    commanded: Action,
    dt: float,
) -> tuple[EgoState, tuple[SurroundingVehicle, ...], tuple[SurroundingVehicle, ...]]:
    """One tick of kinematics, also reporting vehicles the ego collided with.

    Surrounding vehicles keep constant speed and absolute lane; a lane change
    completes at the tick boundary, which re-expresses every rel_x against the
    new ego lane center. Collision = same lane and closest approach under
    VEHICLE_LENGTH_M during the tick.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    new_speed = min(max(ego.speed + _SPEED_DELTAS.get(commanded, 0.0), 0.0), MAX_SPEED_KMH)
    new_lane = lane_after(ego.lane, commanded)
    ego_shift = 0.0
    if new_lane is not ego.lane:
        ego_shift = -LANE_WIDTH_M if new_lane is LanePosition.LEFT_OVERTAKING else LANE_WIDTH_M
    new_ego = EgoState(
        lane=new_lane,
        speed=new_speed,
        odometer=ego.odometer + kmh_to_mps(new_speed) * dt,
    )
    moved: list[SurroundingVehicle] = []
    hits: list[SurroundingVehicle] = []
    for v in vehicles:
        rel_x = v.rel_x - ego_shift
        rel_y = v.rel_y + (kmh_to_mps(v.speed) - kmh_to_mps(new_speed)) * dt
        after = replace(v, rel_x=rel_x, rel_y=rel_y)
        moved.append(after)
        if lane_of(new_lane, rel_x) is new_lane and _closest_approach(v.rel_y, rel_y) < VEHICLE_LENGTH_M:
            hits.append(after)
    return new_ego, tuple(moved), tuple(hits)


def step_kinematics(
    ego: EgoState,
    vehicles: tuple[SurroundingVehicle, ...],
    commanded: Action,
    dt: float,
) -> tuple[EgoState, tuple[SurroundingVehicle, ...]]:
    """One tick of kinematics: speed delta, lane swap, longitudinal drift."""
    new_ego, moved, _ = step_with_collisions(ego, vehicles, commanded, dt)
    return new_ego, moved


def in_collision(ego: EgoState, vehicles: tuple[SurroundingVehicle, ...]) -> bool:
    """True when a same-lane vehicle overlaps the ego position."""
    return any(
        lane_of(ego.lane, v.rel_x) is ego.lane and abs(v.rel_y) < VEHICLE_LENGTH_M
        for v in vehicles
    )


def gap_ahead(
    ego: EgoState, vehicles: tuple[SurroundingVehicle, ...]
) -> tuple[SurroundingVehicle, float] | None:
    """Nearest same-lane vehicle ahead and its gap in meters, if any."""
    ahead = [v for v in vehicles if v.rel_y > 0 and lane_of(ego.lane, v.rel_x) is ego.lane]
    if not ahead:
        return None
    lead = min(ahead, key=lambda v: (v.rel_y, v.speed, v.rel_x, v.category))
    return lead, lead.rel_y


def time_to_collision(ego: EgoState, vehicle: SurroundingVehicle) -> float | None:
    """Seconds until the ego reaches a lead vehicle, absent when not closing.

    Caller guarantees the vehicle is in the ego lane with rel_y > 0.
    """
    closing_mps = kmh_to_mps(ego.speed - vehicle.speed)
    if closing_mps <= 0:
        return None
    return vehicle.rel_y / closing_mps
