"""Drivers: the things that answer a scenario.

All drivers satisfy the same contract (DriverRequest -> DriverTranscript).
Per-request failures are recorded in the transcript, never raised;
configuration problems (missing API key, missing fixture entry) fail fast.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from .policy import PolicyConfig, decide
from .prompts import (
    RATE_LIMITED,
    TIMEOUT,
    TRANSPORT_ERROR,
    Decision,
    ParseError,
    PromptConfig,
    decision_to_raw,
    parse_decision,
)
from .world import Action, Scenario


class MissingFixtureEntry(KeyError):
    """The replay fixture has no recorded response for a scenario id."""


class MissingApiKeyError(RuntimeError):
    """The environment variable holding the API key is not set."""

    def __init__(self, variable: str):
        super().__init__(f"environment variable {variable!r} is not set")
        self.variable = variable


class AuthError(RuntimeError):
    """The endpoint rejected the credentials; not retryable."""


@dataclass(frozen=True)
class DriverRequest:
    scenario: Scenario
    prompt: str
    cfg: PromptConfig
    session_id: str


@dataclass(frozen=True)
class DriverTranscript:
    request: DriverRequest
    raw_response: str
    parsed: Decision | ParseError
    latency_ms: float
    attempts: int
    driver_name: str
    model_name: str | None = None

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        if self.latency_ms < 0:
            raise ValueError("latency must be >= 0")


@dataclass(frozen=True)
class RemoteConfig:
    base_url: str
    model: str
    api_key_env: str = "LLM_API_KEY"
    temperature: float = 0.0  # deterministic unless explicitly overridden
    sampling_seed: int | None = None
    timeout: float = 30.0  # s
    max_retries: int = 3
    concurrency: int = 4


class OracleDriver:
    """Ground-truth baseline: answers structurally via the rule ladder."""

    name = "oracle"
    model_name = None

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig()

    def drive(self, req: DriverRequest) -> DriverTranscript:
        started = time.monotonic()
        decision = decide(req.scenario, self.config)
        raw = decision_to_raw(decision, include_reason=req.cfg.reasoning_requested)
        return DriverTranscript(
            request=req,
            raw_response=raw,
            parsed=parse_decision(raw, req.cfg),
            latency_ms=(time.monotonic() - started) * 1000.0,
            attempts=1,
            driver_name=self.name,
        )


class ConstantDriver:
    """Scripted driver that always answers the same action (tests, rollouts)."""

    model_name = None

    def __init__(self, action: Action):
        self.action = action
        self.name = f"constant:{action.value}"

    def drive(self, req: DriverRequest) -> DriverTranscript:
        raw = json.dumps({"action": self.action.value})
        return DriverTranscript(
            request=req,
            raw_response=raw,
            parsed=parse_decision(raw, req.cfg),
            latency_ms=0.0,
            attempts=1,
            driver_name=self.name,
        )


class ReplayDriver:
    """Re-scores recorded raw responses keyed by scenario id."""

    name = "replay"
    model_name = None

    def __init__(self, fixture: dict[str, str]):
        self.fixture = dict(fixture)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ReplayDriver":
        """Load a fixture file; accepts fixture lines or transcript lines."""
        fixture: dict[str, str] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                if "scenario_id" in obj:
                    fixture[obj["scenario_id"]] = obj["raw_response"]
                elif "request" in obj:
                    fixture[obj["request"]["scenario_id"]] = obj["raw_response"]
        return cls(fixture)

    def drive(self, req: DriverRequest) -> DriverTranscript:
        scenario_id = req.scenario.id
        if scenario_id not in self.fixture:
            raise MissingFixtureEntry(scenario_id)
        raw = self.fixture[scenario_id]
        return DriverTranscript(
            request=req,
            raw_response=raw,
            parsed=parse_decision(raw, req.cfg),
            latency_ms=0.0,
            attempts=1,
            driver_name=self.name,
        )


def resolve_api_key(cfg: RemoteConfig) -> str:
    key = os.environ.get(cfg.api_key_env)
    if not key:
        raise MissingApiKeyError(cfg.api_key_env)
    return key


def request_chat_completion(
    prompt: str, cfg: RemoteConfig, api_key: str
) -> tuple[str | ParseError, int, float]:
    """Single-message chat completion with retries on 429/transport failures.

    Returns (content or typed failure, attempts, latency_ms). Timeouts are
    not retried: the caller asked for an answer within cfg.timeout.
    """
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    payload: dict = {
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    }
    if cfg.sampling_seed is not None:
        payload["seed"] = cfg.sampling_seed
    headers = {"Authorization": f"Bearer {api_key}"}
    started = time.monotonic()
    attempts = 0
    failure = ParseError(TRANSPORT_ERROR, detail="no attempt made")
    with httpx.Client(timeout=cfg.timeout) as client:
        for retry in range(cfg.max_retries + 1):
            attempts += 1
            retryable = False
            try:
                resp = client.post(url, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                failure = ParseError(TIMEOUT, detail=str(exc) or "request timed out")
                break
            except httpx.TransportError as exc:
                failure = ParseError(TRANSPORT_ERROR, detail=str(exc))
                retryable = True
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"endpoint returned HTTP {resp.status_code}")
                if resp.status_code == 429:
                    failure = ParseError(RATE_LIMITED, detail="HTTP 429")
                    retryable = True
                elif resp.status_code >= 500:
                    failure = ParseError(TRANSPORT_ERROR, detail=f"HTTP {resp.status_code}")
                    retryable = True
                elif resp.status_code == 200:
                    try:
                        content = resp.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, TypeError, ValueError):
                        failure = ParseError(
                            TRANSPORT_ERROR, detail="response body is not a chat completion"
                        )
                        break
                    latency_ms = (time.monotonic() - started) * 1000.0
                    return str(content), attempts, latency_ms
                else:
                    failure = ParseError(TRANSPORT_ERROR, detail=f"HTTP {resp.status_code}")
                    break
            if not retryable or retry == cfg.max_retries:
                break
            time.sleep(2.0**retry)  # 1 s, 2 s, 4 s, ...
    return failure, attempts, (time.monotonic() - started) * 1000.0


class RemoteDriver:
    """OpenAI-compatible chat-completions client with bounded retries."""

    def __init__(self, cfg: RemoteConfig):
        self.cfg = cfg
        self.api_key = resolve_api_key(cfg)
        self.name = "remote"
        self.model_name = cfg.model

    def drive(self, req: DriverRequest) -> DriverTranscript:
        content, attempts, latency_ms = request_chat_completion(
            req.prompt, self.cfg, self.api_key
        )
        if isinstance(content, ParseError):
            return DriverTranscript(
                request=req,
                raw_response="",
                parsed=content,
                latency_ms=latency_ms,
                attempts=attempts,
                driver_name=self.name,
                model_name=self.model_name,
            )
        return DriverTranscript(
            request=req,
            raw_response=content,
            parsed=parse_decision(content, req.cfg),
            latency_ms=latency_ms,
            attempts=attempts,
            driver_name=self.name,
            model_name=self.model_name,
        )


# --- transcript persistence --------------------------------------------------

def decision_payload(parsed: Decision | ParseError) -> dict:
    if isinstance(parsed, Decision):
        payload: dict = {"action": parsed.action.value}
        if parsed.reason is not None:
            payload["reason"] = parsed.reason
        return {"decision": payload}
    return {
        "error": {"kind": parsed.kind, "detail": parsed.detail, "position": parsed.position}
    }


def transcript_to_json(t: DriverTranscript) -> dict:
    return {
        "request": {
            "scenario_id": t.request.scenario.id,
            "session_id": t.request.session_id,
            "reasoning_requested": t.request.cfg.reasoning_requested,
            "template_version": t.request.cfg.template_version,
            "prompt": t.request.prompt,
        },
        "raw_response": t.raw_response,
        "parsed": decision_payload(t.parsed),
        "latency_ms": t.latency_ms,
        "attempts": t.attempts,
        "driver_name": t.driver_name,
        "model_name": t.model_name,
    }


class TranscriptWriter:
    """Append-only JSONL sink; writes are serialized through one lock."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._fh = open(self.path, "a", encoding="utf-8")

    def write(self, record: dict) -> None:
        with self._lock:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            self._fh.close()

    def __enter__(self) -> "TranscriptWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def fixture_from_transcripts(path: str | Path) -> dict[str, str]:
    """Convert a transcript JSONL into a replay fixture mapping."""
    return ReplayDriver.from_jsonl(path).fixture
