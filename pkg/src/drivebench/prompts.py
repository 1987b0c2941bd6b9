"""Rendering scenarios into text prompts and parsing model replies.

Templates are bundled and versioned so accuracy numbers stay comparable
across runs; parsing is tolerant (first balanced JSON object anywhere in
the reply) but never coerces an unknown action.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterator

from .world import CANONICAL_ACTIONS, Action, Decision, LanePosition, Scenario

KNOWN_TEMPLATE_VERSIONS = ("v1",)

# ParseError kinds produced by the codecs.
NO_JSON_FOUND = "no_json_found"
MALFORMED_JSON = "malformed_json"
INVALID_ACTION = "invalid_action"
INVALID_POC_ACTION = "invalid_poc_action"
MISSING_DESTINATION = "missing_destination"
# Transcript-level failure kinds recorded by the remote driver.
TIMEOUT = "timeout"
RATE_LIMITED = "rate_limited"
TRANSPORT_ERROR = "transport_error"


class UnknownTemplateError(ValueError):
    """A template_version that names no bundled template."""


@dataclass(frozen=True)
class PromptConfig:
    reasoning_requested: bool = False
    template_version: str = "v1"

    def __post_init__(self) -> None:
        if self.template_version not in KNOWN_TEMPLATE_VERSIONS:
            raise UnknownTemplateError(f"unknown template version {self.template_version!r}")


@dataclass(frozen=True)
class ParseError:
    """A machine-readable decode failure; scored as incorrect, never raised."""

    kind: str
    detail: str = ""
    position: int | None = None


@lru_cache(maxsize=None)
def _template_text(version: str) -> str:
    if version not in KNOWN_TEMPLATE_VERSIONS:
        raise UnknownTemplateError(f"unknown template version {version!r}")
    return resources.files("drivebench").joinpath(f"templates/{version}.txt").read_text("utf-8")


def _fmt(value: float) -> str:
    return f"{value:g}"


_LANE_NAMES = {
    LanePosition.RIGHT_DRIVING: "right (driving)",
    LanePosition.LEFT_OVERTAKING: "left (overtaking)",
}

_CONTRACT_PLAIN = (
    'Respond with a single JSON object exactly of the form '
    '{"action": "<your chosen option>"}.'
)
_CONTRACT_WITH_WHY = (
    'Respond with a single JSON object exactly of the form '
    '{"action": "<your chosen option>", "reason": "<one or two sentences '
    'explaining your choice>"}.'
)


def render_rules(rules) -> list[str]:
    """Natural-language lines for every structured rule field, plus extras."""
    lines = []
    if rules.speed_limit is not None:
        lines.append(f"The speed limit is {_fmt(rules.speed_limit)} km/h.")
    if rules.keep_right:
        lines.append("Keep to the right lane except when overtaking.")
    else:
        lines.append("You may travel in either lane.")
    if rules.overtaking_allowed:
        lines.append("Overtaking is allowed.")
    else:
        lines.append("Overtaking is not allowed.")
    lines.extend(rules.extra_rules)
    return lines


def render_prompt(scenario: Scenario, cfg: PromptConfig) -> str:
    """Deterministic textual prompt for a scenario."""
    if scenario.vehicles:
        objects = "\n".join(
            f"- ({v.category}, x={_fmt(v.rel_x)} m, y={_fmt(v.rel_y)} m, "
            f"speed={_fmt(v.speed)} km/h)"
            for v in scenario.vehicles
        )
    else:
        objects = "none"
    rules = "\n".join(f"- {line}" for line in render_rules(scenario.rules))
    return _template_text(cfg.template_version).format(
        ego_lane=_LANE_NAMES[scenario.ego.lane],
        ego_speed=_fmt(scenario.ego.speed),
        objects=objects,
        rules=rules,
        instruction=scenario.instruction if scenario.instruction else "none",
        output_contract=_CONTRACT_WITH_WHY if cfg.reasoning_requested else _CONTRACT_PLAIN,
    )


def _balanced_spans(text: str) -> Iterator[tuple[int, int]]:
    """Spans of brace-balanced regions, string-literal aware, by start order."""
    i = 0
    n = len(text)
    while True:
        start = text.find("{", i)
        if start == -1:
            return
        depth = 0
        in_string = False
        escaped = False
        end = None
        for j in range(start, n):
            ch = text[j]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    end = j + 1
                    break
        if end is not None:
            yield start, end
        i = start + 1


def extract_json_object(raw: str) -> dict | ParseError:
    """First balanced JSON object in raw text, tolerating surrounding prose."""
    first_start: int | None = None
    for start, end in _balanced_spans(raw):
        if first_start is None:
            first_start = start
        try:
            obj = json.loads(raw[start:end])
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    if first_start is not None:
        return ParseError(MALFORMED_JSON, detail="braces do not enclose valid JSON", position=first_start)
    return ParseError(NO_JSON_FOUND, detail="no JSON object in response")


_SHORT_FORMS = {
    "change lane right": Action.CHANGE_RIGHT,
    "change lane left": Action.CHANGE_LEFT,
}


def normalize_action(s: str) -> Action | None:
    """Trim, case-fold and whitespace-collapse, then match the option list."""
    folded = " ".join(s.split()).casefold()
    for action in CANONICAL_ACTIONS:
        if folded == action.value:
            return action
    return _SHORT_FORMS.get(folded)


def parse_decision(raw: str, cfg: PromptConfig) -> Decision | ParseError:
    """Parse a model reply into a Decision or a typed ParseError."""
    obj = extract_json_object(raw)
    if isinstance(obj, ParseError):
        return obj
    value = obj.get("action")
    if not isinstance(value, str):
        return ParseError(INVALID_ACTION, detail=repr(value))
    action = normalize_action(value)
    if action is None:
        return ParseError(INVALID_ACTION, detail=value)
    reason = obj.get("reason")
    if reason is not None and not isinstance(reason, str):
        reason = json.dumps(reason)
    return Decision(action=action, reason=reason)


def decision_to_raw(decision: Decision, include_reason: bool) -> str:
    """Canonical JSON reply for a decision, as a driver would emit it."""
    payload: dict = {"action": decision.action.value}
    if include_reason and decision.reason is not None:
        payload["reason"] = decision.reason
    return json.dumps(payload)
