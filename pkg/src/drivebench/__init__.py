"""Closed-loop evaluation harness for language-model driving agents."""

from .world import (
    Action,
    Decision,
    EgoState,
    LanePosition,
    Scenario,
    SurroundingVehicle,
    TaskFamily,
    TrafficRuleSet,
)
from .policy import PolicyConfig, SafetyEnvelope, decide, is_action_safe, map_instruction
from .prompts import ParseError, PromptConfig, parse_decision, render_prompt
from .datasets import GenSpec, generate, read_dataset, write_dataset
from .poc import PocCommand, PocScene, generate_poc_dataset, resolve_instruction

__all__ = [
    "Action",
    "Decision",
    "EgoState",
    "GenSpec",
    "LanePosition",
    "ParseError",
    "PocCommand",
    "PocScene",
    "PolicyConfig",
    "PromptConfig",
    "SafetyEnvelope",
    "Scenario",
    "SurroundingVehicle",
    "TaskFamily",
    "TrafficRuleSet",
    "decide",
    "generate",
    "generate_poc_dataset",
    "is_action_safe",
    "map_instruction",
    "parse_decision",
    "read_dataset",
    "render_prompt",
    "resolve_instruction",
    "write_dataset",
]

__version__ = "0.1.0"
