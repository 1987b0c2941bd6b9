"""Harness configuration: a JSON file overriding embedded defaults.

Recognized keys:
  policy.headway, policy.min_gap, policy.limit_tolerance,
  policy.envelope.{rear_clear, front_clear, rear_closing_margin}
  remote.{base_url, model, api_key_env, temperature, sampling_seed,
          timeout, max_retries, concurrency}
  template_version
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .drivers import RemoteConfig
from .policy import PolicyConfig, SafetyEnvelope
from .prompts import KNOWN_TEMPLATE_VERSIONS, UnknownTemplateError


class ConfigError(ValueError):
    """The config file is unreadable or malformed."""


@dataclass(frozen=True)
class HarnessConfig:
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    remote: RemoteConfig | None = None
    template_version: str = "v1"


def _policy_from(obj: dict) -> PolicyConfig:
    envelope_obj = obj.get("envelope", {})
    envelope = SafetyEnvelope(
        rear_clear=envelope_obj.get("rear_clear", 10.0),
        front_clear=envelope_obj.get("front_clear", 15.0),
        rear_closing_margin=envelope_obj.get("rear_closing_margin", 10.0),
    )
    return PolicyConfig(
        headway=obj.get("headway", 2.0),
        min_gap=obj.get("min_gap", 10.0),
        limit_tolerance=obj.get("limit_tolerance", 2.0),
        envelope=envelope,
    )


def _remote_from(obj: dict) -> RemoteConfig:
    try:
        base_url = obj["base_url"]
        model = obj["model"]
    except KeyError as exc:
        raise ConfigError(f"remote config requires {exc.args[0]!r}") from exc
    return RemoteConfig(
        base_url=base_url,
        model=model,
        api_key_env=obj.get("api_key_env", "LLM_API_KEY"),
        temperature=obj.get("temperature", 0.0),
        sampling_seed=obj.get("sampling_seed"),
        timeout=obj.get("timeout", 30.0),
        max_retries=obj.get("max_retries", 3),
        concurrency=obj.get("concurrency", 4),
    )


def load_config(path: str | Path | None) -> HarnessConfig:
    """Load a config file; None means all defaults."""
    if path is None:
        return HarnessConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    template_version = obj.get("template_version", "v1")
    if template_version not in KNOWN_TEMPLATE_VERSIONS:
        raise UnknownTemplateError(f"unknown template version {template_version!r}")
    try:
        policy = _policy_from(obj.get("policy", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad policy config: {exc}") from exc
    remote = _remote_from(obj["remote"]) if "remote" in obj else None
    return HarnessConfig(policy=policy, remote=remote, template_version=template_version)
