import json
import time

import pytest

from drivebench.datasets import GenSpec, generate
from drivebench.drivers import (
    AuthError,
    ConstantDriver,
    DriverRequest,
    DriverTranscript,
    MissingApiKeyError,
    MissingFixtureEntry,
    OracleDriver,
    RemoteConfig,
    RemoteDriver,
    ReplayDriver,
    TranscriptWriter,
    fixture_from_transcripts,
    transcript_to_json,
)
from drivebench.prompts import (
    RATE_LIMITED,
    TIMEOUT,
    Decision,
    ParseError,
    PromptConfig,
    render_prompt,
)
from drivebench.stubserver import StubLLMServer, hang, ok, rate_limit, server_error
from drivebench.world import Action, TaskFamily

from conftest import scenario


def request_for(s, reasoning: bool = False) -> DriverRequest:
    cfg = PromptConfig(reasoning_requested=reasoning)
    return DriverRequest(
        scenario=s, prompt=render_prompt(s, cfg), cfg=cfg, session_id="test"
    )


class TestOracleDriver:
    def test_matches_ground_truth_on_generated_sets(self, config):
        driver = OracleDriver(config)
        for s in generate(GenSpec(task_family=TaskFamily.COMBINED, count=25, seed=0), config):
            t = driver.drive(request_for(s))
            assert isinstance(t.parsed, Decision)
            assert t.parsed.action is s.ground_truth
            assert t.attempts == 1

    def test_empty_road_at_limit_maintains(self, config):
        from drivebench.world import TrafficRuleSet

        s = scenario(ego_speed=70.0, rules=TrafficRuleSet(speed_limit=70.0))
        t = OracleDriver(config).drive(request_for(s))
        assert t.parsed.action is Action.MAINTAIN

    def test_overspeed_reason_contains_limit(self, config):
        from drivebench.world import TrafficRuleSet

        s = scenario(ego_speed=80.0, rules=TrafficRuleSet(speed_limit=70.0))
        t = OracleDriver(config).drive(request_for(s, reasoning=True))
        assert t.parsed.action is Action.DECELERATE
        assert "70" in t.parsed.reason

    def test_reason_omitted_when_not_requested(self, config):
        from drivebench.world import TrafficRuleSet

        s = scenario(ego_speed=80.0, rules=TrafficRuleSet(speed_limit=70.0))
        t = OracleDriver(config).drive(request_for(s, reasoning=False))
        assert "reason" not in t.raw_response


class TestReplayDriver:
    def test_valid_entry(self):
        s = scenario()
        driver = ReplayDriver({s.id: '{"action": "decelerate"}'})
        t = driver.drive(request_for(s))
        assert t.parsed == Decision(Action.DECELERATE)

    def test_garbage_entry_recorded_not_raised(self):
        s = scenario()
        driver = ReplayDriver({s.id: "total garbage"})
        t = driver.drive(request_for(s))
        assert isinstance(t.parsed, ParseError)

    def test_missing_entry_raises(self):
        driver = ReplayDriver({})
        with pytest.raises(MissingFixtureEntry):
            driver.drive(request_for(scenario()))

    def test_fixture_from_transcripts_round_trip(self, config, tmp_path):
        s = scenario()
        driver = OracleDriver(config)
        path = tmp_path / "transcripts.jsonl"
        with TranscriptWriter(path) as writer:
            writer.write(transcript_to_json(driver.drive(request_for(s))))
        fixture = fixture_from_transcripts(path)
        assert s.id in fixture
        replay = ReplayDriver(fixture).drive(request_for(s))
        assert replay.parsed.action is s.ground_truth or isinstance(replay.parsed, Decision)


class TestConstantDriver:
    def test_always_same_action(self):
        driver = ConstantDriver(Action.ACCELERATE)
        t = driver.drive(request_for(scenario()))
        assert t.parsed == Decision(Action.ACCELERATE)


def remote_config(server: StubLLMServer, **overrides) -> RemoteConfig:
    defaults = dict(
        base_url=server.base_url,
        model="stub-model",
        api_key_env="DRIVEBENCH_TEST_KEY",
        timeout=2.0,
        max_retries=3,
    )
    defaults.update(overrides)
    return RemoteConfig(**defaults)


@pytest.fixture(autouse=True)
def _api_key(monkeypatch):
    monkeypatch.setenv("DRIVEBENCH_TEST_KEY", "test-key-123")


class TestRemoteDriver:
    def test_missing_key_fails_fast(self, monkeypatch):
        monkeypatch.delenv("DRIVEBENCH_TEST_KEY", raising=False)
        with StubLLMServer() as server:
            with pytest.raises(MissingApiKeyError) as excinfo:
                RemoteDriver(remote_config(server))
            assert "DRIVEBENCH_TEST_KEY" in str(excinfo.value)

    def test_simple_success(self):
        with StubLLMServer([ok('{"action": "decelerate"}')]) as server:
            driver = RemoteDriver(remote_config(server))
            t = driver.drive(request_for(scenario()))
        assert t.parsed == Decision(Action.DECELERATE)
        assert t.attempts == 1
        assert t.model_name == "stub-model"

    def test_request_payload_shape(self):
        with StubLLMServer() as server:
            cfg = remote_config(server, sampling_seed=11)
            RemoteDriver(cfg).drive(request_for(scenario()))
            payload = server.requests[0]
        assert payload["model"] == "stub-model"
        assert payload["temperature"] == 0.0
        assert payload["seed"] == 11
        assert payload["messages"][0]["role"] == "user"
        assert "two-lane highway" in payload["messages"][0]["content"]

    def test_rate_limit_retries_then_succeeds(self):
        behaviors = [rate_limit(), rate_limit(), ok('{"action": "maintain"}')]
        with StubLLMServer(behaviors) as server:
            driver = RemoteDriver(remote_config(server))
            started = time.monotonic()
            t = driver.drive(request_for(scenario()))
            elapsed = time.monotonic() - started
        assert t.parsed == Decision(Action.MAINTAIN)
        assert t.attempts == 3
        # Backoff slept ~1 s then ~2 s.
        assert 2.4 <= elapsed <= 4.5
        gaps = [b - a for a, b in zip(server.request_times, server.request_times[1:])]
        assert 0.8 <= gaps[0] <= 1.2
        assert 1.6 <= gaps[1] <= 2.4

    def test_rate_limit_exhausts_retries(self):
        with StubLLMServer([rate_limit()] * 8) as server:
            driver = RemoteDriver(remote_config(server, max_retries=1))
            t = driver.drive(request_for(scenario()))
        assert isinstance(t.parsed, ParseError)
        assert t.parsed.kind == RATE_LIMITED
        assert t.attempts == 2

    def test_timeout_recorded_without_retry(self):
        with StubLLMServer([hang(5.0)]) as server:
            driver = RemoteDriver(remote_config(server, timeout=0.5))
            started = time.monotonic()
            t = driver.drive(request_for(scenario()))
            elapsed = time.monotonic() - started
        assert isinstance(t.parsed, ParseError)
        assert t.parsed.kind == TIMEOUT
        assert t.attempts == 1
        assert elapsed < 2.0

    def test_server_error_retries(self):
        with StubLLMServer([server_error(500), ok('{"action": "maintain"}')]) as server:
            t = RemoteDriver(remote_config(server)).drive(request_for(scenario()))
        assert t.parsed == Decision(Action.MAINTAIN)
        assert t.attempts == 2

    def test_auth_error_raises(self):
        with StubLLMServer([server_error(401)]) as server:
            driver = RemoteDriver(remote_config(server))
            with pytest.raises(AuthError):
                driver.drive(request_for(scenario()))


class TestTranscriptPersistence:
    def test_jsonl_schema(self, config, tmp_path):
        s = scenario()
        t = OracleDriver(config).drive(request_for(s, reasoning=True))
        path = tmp_path / "t.jsonl"
        with TranscriptWriter(path) as writer:
            writer.write(transcript_to_json(t))
        line = json.loads(path.read_text().splitlines()[0])
        assert line["request"]["scenario_id"] == s.id
        assert line["driver_name"] == "oracle"
        assert line["attempts"] == 1
        assert "decision" in line["parsed"]

    def test_append_only(self, config, tmp_path):
        path = tmp_path / "t.jsonl"
        t = OracleDriver(config).drive(request_for(scenario()))
        with TranscriptWriter(path) as writer:
            writer.write(transcript_to_json(t))
        with TranscriptWriter(path) as writer:
            writer.write(transcript_to_json(t))
        assert len(path.read_text().splitlines()) == 2

    def test_transcript_validation(self, config):
        t = OracleDriver(config).drive(request_for(scenario()))
        with pytest.raises(ValueError):
            DriverTranscript(
                request=t.request,
                raw_response="",
                parsed=t.parsed,
                latency_ms=-1.0,
                attempts=1,
                driver_name="x",
            )
        with pytest.raises(ValueError):
            DriverTranscript(
                request=t.request,
                raw_response="",
                parsed=t.parsed,
                latency_ms=0.0,
                attempts=0,
                driver_name="x",
            )
