"""Deployment-mirror task: ground an instruction to a detected object or stop.

A traffic-officer stop signal dominates every instruction; ambiguous or
unresolvable references resolve to Stop, never to a guess.
"""

from __future__ import annotations

import enum
import json
import random
import re
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .drivers import RemoteConfig, request_chat_completion, resolve_api_key
from .prompts import (
    INVALID_POC_ACTION,
    MISSING_DESTINATION,
    ParseError,
    extract_json_object,
)

COLOR_PALETTE = ("red", "blue", "yellow", "green", "orange", "purple", "white", "black")
POC_CATEGORIES = ("color cone", "box", "ball")
X_GRID = tuple(x / 2.0 for x in range(-8, 9))  # -4 .. +4 m in 0.5 m steps
Y_GRID = tuple(y / 2.0 for y in range(6, 41))  # 3 .. 20 m in 0.5 m steps


class EmptyDatasetError(ValueError):
    """Accuracy over zero scenes is undefined."""


class OfficerSignal(enum.Enum):
    ABSENT = "absent"
    GO = "go"
    STOP = "stop"


@dataclass(frozen=True)
class DetectedObject:
    id: int
    category: str
    color: str
    x: float  # m lateral, right-positive
    y: float  # m forward

    def __post_init__(self) -> None:
        if self.y <= 0:
            raise ValueError("detected objects are in front of the vehicle (y > 0)")


@dataclass(frozen=True)
class PocCommand:
    action: str  # "stop" | "go"
    destination_id: int | None = None

    def __post_init__(self) -> None:
        if self.action not in ("stop", "go"):
            raise ValueError(f"unknown command action {self.action!r}")
        if self.action == "go" and not isinstance(self.destination_id, int):
            raise ValueError("go commands need an integer destination_id")
        if self.action == "stop" and self.destination_id is not None:
            raise ValueError("stop commands carry no destination")

    @classmethod
    def stop(cls) -> "PocCommand":
        return cls(action="stop")

    @classmethod
    def go_to(cls, destination_id: int) -> "PocCommand":
        return cls(action="go", destination_id=destination_id)


@dataclass(frozen=True)
class PocScene:
    id: str
    objects: tuple[DetectedObject, ...]
    officer: OfficerSignal
    instruction: str | None
    ground_truth: PocCommand
    seed: int

    def __post_init__(self) -> None:
        ids = [o.id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError("object ids must be unique within a scene")
        if self.ground_truth.action == "go" and self.ground_truth.destination_id not in ids:
            raise ValueError("ground truth references an object not in the scene")


# --- referring-expression resolution ----------------------------------------

_STOP_WORDS = ("stop", "halt", "wait")
_SUPERLATIVES = (
    ("leftmost", "min_x"),
    ("left", "min_x"),
    ("rightmost", "max_x"),
    ("right", "max_x"),
    ("middle", "median_x"),
    ("center", "median_x"),
    ("central", "median_x"),
    ("nearest", "min_y"),
    ("closest", "min_y"),
    ("farthest", "max_y"),
    ("furthest", "max_y"),
)


def _word_positions(text: str, phrase: str) -> list[int]:
    return [m.start() for m in re.finditer(rf"\b{re.escape(phrase)}\b", text)]


def _unique_extreme(candidates: list[DetectedObject], key, use_min: bool) -> list[DetectedObject]:
    values = [key(o) for o in candidates]
    best = min(values) if use_min else max(values)
    hits = [o for o in candidates if key(o) == best]
    return hits if len(hits) == 1 else []


def _median_by_x(candidates: list[DetectedObject]) -> list[DetectedObject]:
    # Only defined for odd counts; ties at the median value are ambiguous.
    if len(candidates) % 2 == 0:
        return []
    xs = sorted(o.x for o in candidates)
    median = xs[len(xs) // 2]
    hits = [o for o in candidates if o.x == median]
    return hits if len(hits) == 1 else []


def _apply_superlative(candidates: list[DetectedObject], op: str) -> list[DetectedObject]:
    if not candidates:
        return []
    if op == "min_x":
        return _unique_extreme(candidates, lambda o: o.x, use_min=True)
    if op == "max_x":
        return _unique_extreme(candidates, lambda o: o.x, use_min=False)
    if op == "median_x":
        return _median_by_x(candidates)
    if op == "min_y":
        return _unique_extreme(candidates, lambda o: o.y, use_min=True)
    return _unique_extreme(candidates, lambda o: o.y, use_min=False)


def resolve_instruction(scene: PocScene) -> PocCommand:
    """Resolve the scene's instruction to a destination, or Stop.

    Officer stop dominates; no instruction, a stop request, an unresolvable
    or ambiguous reference all resolve to Stop.
    """
    if scene.officer is OfficerSignal.STOP:
        return PocCommand.stop()
    if not scene.instruction or not scene.instruction.strip():
        return PocCommand.stop()
    text = " ".join(scene.instruction.split()).casefold()
    if any(_word_positions(text, w) for w in _STOP_WORDS):
        return PocCommand.stop()

    candidates = sorted(scene.objects, key=lambda o: o.id)

    # Filters first: categories and colors in the order they appear in the
    # text, then superlatives in text order.
    filters: list[tuple[int, str, str]] = []
    for category in sorted({o.category for o in scene.objects}):
        positions = _word_positions(text, category)
        last_word = category.split()[-1]
        if not positions and last_word != category:
            positions = _word_positions(text, last_word)
        for pos in positions[:1]:
            filters.append((pos, "category", category))
    known_colors = sorted(set(COLOR_PALETTE) | {o.color for o in scene.objects})
    for color in known_colors:
        for pos in _word_positions(text, color)[:1]:
            filters.append((pos, "color", color))
    for pos, kind, value in sorted(filters):
        if kind == "category":
            candidates = [o for o in candidates if o.category == value]
        else:
            candidates = [o for o in candidates if o.color == value]

    superlatives: list[tuple[int, str]] = []
    claimed: set[int] = set()
    for word, op in _SUPERLATIVES:
        for pos in _word_positions(text, word):
            if pos not in claimed:
                claimed.add(pos)
                superlatives.append((pos, op))
    for _, op in sorted(superlatives):
        candidates = _apply_superlative(candidates, op)

    if len(candidates) == 1:
        return PocCommand.go_to(candidates[0].id)
    return PocCommand.stop()


# --- prompt / response codec --------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:g}"


_POC_PREAMBLE = (
    "You are the decision-making module of a vehicle in a closed test area. "
    "Detected objects in front of you are listed as (id, category, color, "
    "x=<lateral> m, y=<forward> m); x is positive to your right."
)
_POC_TASK = (
    "Decide whether to drive to one of the detected objects or to stop. "
    'Respond with a single JSON object: {"action": "go", "destination_id": '
    '<id of the chosen object>} to proceed to an object, or {"action": "stop"} to stop.'
)
_OFFICER_STOP_RULE = "A traffic officer in front of you signals STOP. You must stop."
_OFFICER_GO_RULE = "A traffic officer in front of you signals that you may proceed."


def render_poc_prompt(scene: PocScene) -> str:
    objects = "\n".join(
        f"- ({o.id}, {o.category}, {o.color}, x={_fmt(o.x)} m, y={_fmt(o.y)} m)"
        for o in scene.objects
    )
    if scene.officer is OfficerSignal.STOP:
        rules = f"- {_OFFICER_STOP_RULE}"
    elif scene.officer is OfficerSignal.GO:
        rules = f"- {_OFFICER_GO_RULE}"
    else:
        rules = "none"
    instruction = scene.instruction if scene.instruction else "none"
    return (
        f"{_POC_PREAMBLE}\n\nOBJECTS:\n{objects}\n\nRULES:\n{rules}\n\n"
        f"INSTRUCTION:\n{instruction}\n\nTASK:\n{_POC_TASK}\n"
    )


def parse_poc_response(raw: str) -> PocCommand | ParseError:
    obj = extract_json_object(raw)
    if isinstance(obj, ParseError):
        return obj
    action = obj.get("action")
    if not isinstance(action, str) or action.strip().casefold() not in ("go", "stop"):
        return ParseError(INVALID_POC_ACTION, detail=repr(action))
    if action.strip().casefold() == "stop":
        return PocCommand.stop()
    destination = obj.get("destination_id")
    if isinstance(destination, bool) or not isinstance(destination, int):
        return ParseError(MISSING_DESTINATION, detail=repr(destination))
    return PocCommand.go_to(destination)


def command_to_raw(command: PocCommand) -> str:
    if command.action == "go":
        return json.dumps({"action": "go", "destination_id": command.destination_id})
    return json.dumps({"action": "stop"})


# --- dataset generation --------------------------------------------------------

_INSTRUCTION_BUILDERS = (
    "none",
    "stop",
    "color",
    "superlative_x",
    "range_y",
    "color_category",
)


def _scene_instruction(rng: random.Random, objects: tuple[DetectedObject, ...]) -> str | None:
    roll = rng.random()
    categories = sorted({o.category for o in objects})
    category = rng.choice(categories)
    if roll < 0.10:
        return None
    if roll < 0.15:
        return "Please stop."
    if roll < 0.45:
        # Usually a scene color, occasionally one that is absent.
        if rng.random() < 0.85:
            color = rng.choice(sorted({o.color for o in objects}))
        else:
            color = rng.choice(COLOR_PALETTE)
        return f"Please go to the {color} {category}."
    if roll < 0.75:
        word = rng.choice(("leftmost", "rightmost", "middle", "right", "left"))
        return f"Head towards the {word} {category}."
    if roll < 0.90:
        word = rng.choice(("nearest", "farthest"))
        return f"Drive to the {word} {category}."
    color = rng.choice(sorted({o.color for o in objects}))
    word = rng.choice(("nearest", "leftmost", "rightmost"))
    return f"Go to the {word} {color} {category}."


def generate_poc_dataset(count: int = 20, seed: int = 0) -> list[PocScene]:
    """Seeded scenes mirroring the in-vehicle setup, labeled by the resolver."""
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = random.Random(seed)
    scenes: list[PocScene] = []
    for index in range(count):
        n = rng.randint(2, 5)
        colors = rng.sample(COLOR_PALETTE, n)
        xs = rng.sample(X_GRID, n)
        if rng.random() < 0.7:
            categories = ["color cone"] * n
        else:
            categories = [rng.choice(POC_CATEGORIES) for _ in range(n)]
        objects = tuple(
            DetectedObject(
                id=i + 1,
                category=categories[i],
                color=colors[i],
                x=xs[i],
                y=rng.choice(Y_GRID),
            )
            for i in range(n)
        )
        officer_roll = rng.random()
        if officer_roll < 0.25:
            officer = OfficerSignal.STOP
        elif officer_roll < 0.375:
            officer = OfficerSignal.GO
        else:
            officer = OfficerSignal.ABSENT
        instruction = _scene_instruction(rng, objects)
        scene = PocScene(
            id=f"poc-s{seed}-{index:04d}",
            objects=objects,
            officer=officer,
            instruction=instruction,
            ground_truth=PocCommand.stop(),
            seed=seed,
        )
        scenes.append(replace(scene, ground_truth=resolve_instruction(scene)))
    return scenes


# --- dataset serialization ------------------------------------------------------

def scene_to_json(scene: PocScene) -> dict:
    ground_truth: dict = {"action": scene.ground_truth.action}
    if scene.ground_truth.action == "go":
        ground_truth["destination_id"] = scene.ground_truth.destination_id
    return {
        "id": scene.id,
        "objects": [
            {"id": o.id, "category": o.category, "color": o.color, "x_m": o.x, "y_m": o.y}
            for o in scene.objects
        ],
        "officer": scene.officer.value,
        "instruction": scene.instruction,
        "ground_truth": ground_truth,
        "seed": scene.seed,
    }


def scene_from_json(obj: dict) -> PocScene:
    gt = obj["ground_truth"]
    if gt["action"] == "go":
        command = PocCommand.go_to(gt["destination_id"])
    else:
        command = PocCommand.stop()
    return PocScene(
        id=obj["id"],
        objects=tuple(
            DetectedObject(
                id=o["id"], category=o["category"], color=o["color"], x=o["x_m"], y=o["y_m"]
            )
            for o in obj["objects"]
        ),
        officer=OfficerSignal(obj["officer"]),
        instruction=obj.get("instruction"),
        ground_truth=command,
        seed=obj["seed"],
    )


def write_poc_dataset(scenes: list[PocScene], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_json(scene)) + "\n")


def read_poc_dataset(path: str | Path) -> list[PocScene]:
    scenes = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                scenes.append(scene_from_json(json.loads(line)))
    return scenes


# --- drivers and evaluation -------------------------------------------------------

@dataclass(frozen=True)
class PocTranscript:
    scene_id: str
    prompt: str
    raw_response: str
    parsed: PocCommand | ParseError
    latency_ms: float
    attempts: int
    driver_name: str
    model_name: str | None = None


class PocOracleDriver:
    name = "oracle"
    model_name = None

    def answer(self, scene: PocScene) -> PocTranscript:
        started = time.monotonic()
        command = resolve_instruction(scene)
        raw = command_to_raw(command)
        return PocTranscript(
            scene_id=scene.id,
            prompt=render_poc_prompt(scene),
            raw_response=raw,
            parsed=parse_poc_response(raw),
            latency_ms=(time.monotonic() - started) * 1000.0,
            attempts=1,
            driver_name=self.name,
        )


class PocReplayDriver:
    name = "replay"
    model_name = None

    def __init__(self, fixture: dict[str, str]):
        self.fixture = dict(fixture)

    def answer(self, scene: PocScene) -> PocTranscript:
        from .drivers import MissingFixtureEntry

        if scene.id not in self.fixture:
            raise MissingFixtureEntry(scene.id)
        raw = self.fixture[scene.id]
        return PocTranscript(
            scene_id=scene.id,
            prompt=render_poc_prompt(scene),
            raw_response=raw,
            parsed=parse_poc_response(raw),
            latency_ms=0.0,
            attempts=1,
            driver_name=self.name,
        )


class PocRemoteDriver:
    name = "remote"

    def __init__(self, cfg: RemoteConfig):
        self.cfg = cfg
        self.api_key = resolve_api_key(cfg)
        self.model_name = cfg.model

    def answer(self, scene: PocScene) -> PocTranscript:
        prompt = render_poc_prompt(scene)
        content, attempts, latency_ms = request_chat_completion(prompt, self.cfg, self.api_key)
        if isinstance(content, ParseError):
            return PocTranscript(
                scene_id=scene.id,
                prompt=prompt,
                raw_response="",
                parsed=content,
                latency_ms=latency_ms,
                attempts=attempts,
                driver_name=self.name,
                model_name=self.model_name,
            )
        return PocTranscript(
            scene_id=scene.id,
            prompt=prompt,
            raw_response=content,
            parsed=parse_poc_response(content),
            latency_ms=latency_ms,
            attempts=attempts,
            driver_name=self.name,
            model_name=self.model_name,
        )


def poc_transcript_to_json(t: PocTranscript) -> dict:
    if isinstance(t.parsed, PocCommand):
        parsed: dict = {"command": json.loads(command_to_raw(t.parsed))}
    else:
        parsed = {
            "error": {"kind": t.parsed.kind, "detail": t.parsed.detail, "position": t.parsed.position}
        }
    return {
        "request": {"scenario_id": t.scene_id, "prompt": t.prompt},
        "raw_response": t.raw_response,
        "parsed": parsed,
        "latency_ms": t.latency_ms,
        "attempts": t.attempts,
        "driver_name": t.driver_name,
        "model_name": t.model_name,
    }


def iter_poc_results(scenes: list[PocScene], driver):
    """Yield (scene, transcript, correct) with exact-match scoring."""
    for scene in scenes:
        transcript = driver.answer(scene)
        correct = isinstance(transcript.parsed, PocCommand) and transcript.parsed == scene.ground_truth
        yield scene, transcript, correct


def evaluate_poc(scenes: list[PocScene], driver) -> float:
    """Exact-match accuracy of a driver over a scene list."""
    if not scenes:
        raise EmptyDatasetError("cannot evaluate an empty scene list")
    correct = sum(1 for _, _, ok in iter_poc_results(scenes, driver) if ok)
    return correct / len(scenes)
