"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; plain `pytest` reports the same outcomes as test results.
"""

import json
import random
import sys
import time
from dataclasses import replace
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from drivebench.config import HarnessConfig
from drivebench.datasets import GenSpec, generate, write_dataset
from drivebench.drivers import OracleDriver, RemoteConfig, RemoteDriver
from drivebench.harness import run_eval
from drivebench.poc import (
    OfficerSignal,
    PocCommand,
    PocOracleDriver,
    evaluate_poc,
    generate_poc_dataset,
    resolve_instruction,
    write_poc_dataset,
)
from drivebench.policy import (
    PolicyConfig,
    decide,
    is_action_safe,
    map_instruction,
    rule_compliant,
)
from drivebench.prompts import (
    Decision,
    ParseError,
    PromptConfig,
    decision_to_raw,
    parse_decision,
)
from drivebench.rollout import RolloutTerminal, detect_violations, rollout, write_trace
from drivebench.server import create_app
from drivebench.stubserver import StubLLMServer, hang, ok, rate_limit
from drivebench.world import Action, TaskFamily

from conftest import random_scenario
from test_prompts import PROSE_ALPHABET, fuzz_wrap

FIXTURE = Path(__file__).parent / "fixtures" / "replay_sadm34_seed0.jsonl"
PAPER_SIZES = ((TaskFamily.SADM, 34), (TaskFamily.FTR, 24), (TaskFamily.COMBINED, 50))


def report(line: str) -> None:
    print(line, file=sys.stderr)


def test_criterion_1_oracle_closure(tmp_path):
    """Oracle eval on paper-sized datasets is exactly 1.0 for seeds 0-4, < 5 s."""
    config = HarnessConfig()
    started = time.monotonic()
    runs = 0
    for seed in range(5):
        for family, count in PAPER_SIZES:
            dataset = tmp_path / f"{family.value}-{seed}.jsonl"
            write_dataset(generate(GenSpec(task_family=family, count=count, seed=seed),
                                   config.policy), dataset)
            result = run_eval(dataset, "oracle", False,
                              tmp_path / f"r-{family.value}-{seed}.json", config)
            assert result.accuracy == 1.0, (family, seed, result.accuracy)
            assert len(result.per_scenario) == count
            runs += 1
    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"took {elapsed:.2f} s"
    report(f"PASS criterion 1: oracle closure — {runs} evals all 1.0 in {elapsed:.2f} s")


def test_criterion_2_safety_properties():
    """Zero violations of four policy properties over >= 10,000 random scenarios."""
    config = PolicyConfig()
    rng = random.Random(20240)
    n = 10_000
    counts = {"overspeed_accel": 0, "unsafe_change": 0, "permutation": 0, "misleading": 0}
    checked = {"overspeed_accel": 0, "unsafe_change": 0, "permutation": 0, "misleading": 0}
    for _ in range(n):
        s = random_scenario(rng)
        d = decide(s, config)
        limit = s.rules.speed_limit
        if limit is not None and s.ego.speed >= limit + config.limit_tolerance:
            checked["overspeed_accel"] += 1
            if d.action is Action.ACCELERATE:
                counts["overspeed_accel"] += 1
        if d.action in (Action.CHANGE_LEFT, Action.CHANGE_RIGHT):
            checked["unsafe_change"] += 1
            if not is_action_safe(s, d.action, config):
                counts["unsafe_change"] += 1
        if len(s.vehicles) >= 2:
            checked["permutation"] += 1
            shuffled = list(s.vehicles)
            rng.shuffle(shuffled)
            if decide(replace(s, vehicles=tuple(shuffled)), config) != d:
                counts["permutation"] += 1
        mapped = map_instruction(s.instruction) if s.instruction else None
        if mapped is not None and not (
            is_action_safe(s, mapped, config) and rule_compliant(s, mapped, config)
        ):
            checked["misleading"] += 1
            if decide(replace(s, instruction=None), config) != d:
                counts["misleading"] += 1
    assert all(v == 0 for v in counts.values()), counts
    assert all(v > 100 for v in checked.values()), checked
    report(
        f"PASS criterion 2: safety properties — {n} scenarios, checks "
        + " ".join(f"{k}={checked[k]}/violations={counts[k]}" for k in counts)
    )


def test_criterion_3_closed_loop_safety():
    """100 scenarios x 60-tick oracle rollouts: all Completed, zero events, < 30 s."""
    config = PolicyConfig()
    started = time.monotonic()
    pool = []
    for family, count in PAPER_SIZES:
        pool.extend(generate(GenSpec(task_family=family, count=count, seed=1), config))
    assert len(pool) >= 100
    driver = OracleDriver(config)
    completed = 0
    events = 0
    for scenario in pool[:100]:
        trace = rollout(scenario, driver, steps=60)
        if trace.terminal is RolloutTerminal.COMPLETED:
            completed += 1
        events += len(detect_violations(trace, scenario.rules, config))
    elapsed = time.monotonic() - started
    assert completed == 100
    assert events == 0
    assert elapsed < 30.0, f"took {elapsed:.2f} s"
    report(
        f"PASS criterion 3: closed-loop safety — 100/100 completed, "
        f"0 violations in {elapsed:.2f} s"
    )


def test_criterion_4_parser_robustness():
    """Round-trip all five actions; 1,000 fuzzed valid and 1,000 malformed inputs."""
    cfg = PromptConfig()
    for action in Action:
        raw = decision_to_raw(Decision(action), include_reason=False)
        got = parse_decision(raw, cfg)
        assert isinstance(got, Decision) and got.action is action
    rng = random.Random(777)
    actions = list(Action)
    for i in range(1000):
        action = actions[i % len(actions)]
        got = parse_decision(fuzz_wrap(rng, action), cfg)
        assert isinstance(got, Decision) and got.action is action, i
    crashes = 0
    for i in range(1000):
        mode = i % 4
        if mode == 0:
            raw = "".join(rng.choice(PROSE_ALPHABET) for _ in range(rng.randint(0, 100)))
        elif mode == 1:
            raw = '{"action": "' + rng.choice(("stop", "go", "hover")) + '"}'
        elif mode == 2:
            raw = "{" + "".join(rng.choice("xyz:, {") for _ in range(rng.randint(1, 30)))
        else:
            raw = '{"action": null}'
        got = parse_decision(raw, cfg)
        assert isinstance(got, ParseError), (i, raw)
    report(
        "PASS criterion 4: parser robustness — 5 round-trips, 1000 fuzzed recovered, "
        f"1000 malformed typed, {crashes} crashes"
    )


def test_criterion_5_determinism(tmp_path):
    """Byte-identical datasets for all families + POC; byte-identical rollouts."""
    config = HarnessConfig()
    for family, count in PAPER_SIZES:
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        spec = GenSpec(task_family=family, count=count, seed=3)
        write_dataset(generate(spec, config.policy), a)
        write_dataset(generate(spec, config.policy), b)
        assert a.read_bytes() == b.read_bytes(), family
    pa, pb = tmp_path / "pa.jsonl", tmp_path / "pb.jsonl"
    write_poc_dataset(generate_poc_dataset(20, seed=3), pa)
    write_poc_dataset(generate_poc_dataset(20, seed=3), pb)
    assert pa.read_bytes() == pb.read_bytes()
    scenario = generate(GenSpec(task_family=TaskFamily.COMBINED, count=1, seed=3),
                        config.policy)[0]
    ta, tb = tmp_path / "ta.jsonl", tmp_path / "tb.jsonl"
    write_trace(rollout(scenario, OracleDriver(config.policy), steps=30), ta)
    write_trace(rollout(scenario, OracleDriver(config.policy), steps=30), tb)
    assert ta.read_bytes() == tb.read_bytes()
    report("PASS criterion 5: determinism — datasets and rollout traces byte-identical")


def test_criterion_6_poc_properties():
    """Oracle resolver 1.0 on the 20-scene set; dominance and mirror symmetry."""
    scenes = generate_poc_dataset(20, seed=0)
    assert len(scenes) == 20
    accuracy = evaluate_poc(scenes, PocOracleDriver())
    assert accuracy == 1.0
    big = generate_poc_dataset(1000, seed=99)
    dominance_failures = sum(
        1
        for scene in big
        if resolve_instruction(replace(scene, officer=OfficerSignal.STOP)) != PocCommand.stop()
    )
    assert dominance_failures == 0
    mirror_failures = 0
    for scene in big:
        base = replace(scene, officer=OfficerSignal.ABSENT)
        mirrored = replace(base, objects=tuple(replace(o, x=-o.x) for o in base.objects))
        left = resolve_instruction(replace(base, instruction="go to the leftmost object"))
        right = resolve_instruction(replace(mirrored, instruction="go to the rightmost object"))
        if left != right:
            mirror_failures += 1
    assert mirror_failures == 0
    report(
        "PASS criterion 6: poc properties — resolver 1.0 on 20 scenes, "
        "officer dominance 1000/1000, mirror symmetry 1000/1000"
    )


def test_criterion_7_replay_fidelity(tmp_path):
    """The bundled 17-of-34 fixture re-scores to exactly 0.5, repeatably."""
    config = HarnessConfig()
    dataset = tmp_path / "sadm.jsonl"
    write_dataset(generate(GenSpec(task_family=TaskFamily.SADM, count=34, seed=0),
                           config.policy), dataset)
    accuracies = []
    for run in range(2):
        result = run_eval(dataset, f"replay:{FIXTURE}", False,
                          tmp_path / f"replay-{run}.json", config)
        accuracies.append(result.accuracy)
        assert sum(1 for r in result.per_scenario if r.correct) == 17
    assert accuracies == [0.5, 0.5]
    first = json.loads((tmp_path / "replay-0.json").read_text())
    second = json.loads((tmp_path / "replay-1.json").read_text())
    for d in (first, second):
        d.pop("started"), d.pop("finished")
    assert first == second
    report("PASS criterion 7: replay fidelity — 17/34 = 0.5 on both runs")


def test_criterion_8_remote_adapter(monkeypatch, tmp_path):
    """Stubbed 200 / 429x2-then-200 / never-respond; attempts and backoff checked."""
    monkeypatch.setenv("ACCEPT_KEY", "k")
    from conftest import scenario as make_scenario
    from drivebench.drivers import DriverRequest
    from drivebench.prompts import render_prompt

    def drive_once(server, **overrides):
        cfg = RemoteConfig(base_url=server.base_url, model="m", api_key_env="ACCEPT_KEY",
                           timeout=overrides.pop("timeout", 5.0), **overrides)
        driver = RemoteDriver(cfg)
        s = make_scenario()
        prompt_cfg = PromptConfig()
        return driver.drive(DriverRequest(scenario=s, prompt=render_prompt(s, prompt_cfg),
                                          cfg=prompt_cfg, session_id="acc"))

    with StubLLMServer([ok('{"action": "maintain"}')]) as server:
        t = drive_once(server)
        assert isinstance(t.parsed, Decision) and t.attempts == 1

    with StubLLMServer([rate_limit(), rate_limit(), ok('{"action": "maintain"}')]) as server:
        t = drive_once(server)
        assert isinstance(t.parsed, Decision) and t.attempts == 3
        gaps = [b - a for a, b in zip(server.request_times, server.request_times[1:])]
        assert 0.8 <= gaps[0] <= 1.2, gaps
        assert 1.6 <= gaps[1] <= 2.4, gaps

    with StubLLMServer([rate_limit()] * 3 + [ok('{"action": "maintain"}')]) as server:
        t = drive_once(server)
        assert isinstance(t.parsed, Decision) and t.attempts == 4
        gaps = [b - a for a, b in zip(server.request_times, server.request_times[1:])]
        assert 3.2 <= gaps[2] <= 4.8, gaps

    with StubLLMServer([hang(10.0)]) as server:
        started = time.monotonic()
        t = drive_once(server, timeout=0.6)
        elapsed = time.monotonic() - started
        assert isinstance(t.parsed, ParseError) and t.parsed.kind == "timeout"
        assert t.attempts == 1
        assert 0.4 <= elapsed <= 2.0

    report(
        "PASS criterion 8: remote adapter — attempts {1, 3, 4, timeout}, "
        "backoff within ±20% of 1/2/4 s"
    )


def test_criterion_9_console_loop_contract():
    """The operator-console sequence works end to end over documented endpoints."""
    client = TestClient(create_app(HarnessConfig()))
    sid = client.post("/api/sessions", json={"mode": "poc", "seed": 4, "driver": "oracle"}).json()["session_id"]
    state = client.get(f"/api/sessions/{sid}/state").json()
    assert len(state["objects"]) == 3
    rightmost = max(state["objects"], key=lambda o: o["x_m"])

    with client.websocket_connect(f"/ws/sessions/{sid}") as ws:
        assert ws.receive_json()["type"] == "state"
        resp = client.post(
            f"/api/sessions/{sid}/instruction",
            json={"text": "Please go to the right color cone"},
        )
        command = resp.json()["decision"]["command"]
        assert command == {"action": "go", "destination_id": rightmost["id"]}
        event = ws.receive_json()
        assert event["type"] == "decision"
        assert event["payload"]["command"]["destination_id"] == rightmost["id"]

        assert client.post(f"/api/sessions/{sid}/officer", json={"signal": "stop"}).status_code == 200
        resp = client.post(
            f"/api/sessions/{sid}/instruction",
            json={"text": "Please go to the right color cone"},
        )
        assert resp.json()["decision"]["command"] == {"action": "stop"}
    report(
        "PASS criterion 9: console loop — GoTo(rightmost) then officer-stop "
        "dominance over documented endpoints"
    )
