"""HTTP/WebSocket session API backing the operator console.

Each session is a serialized state machine: commands are applied under the
session's lock in arrival order, and every mutation is broadcast to that
session's event stream only.
"""

from __future__ import annotations

import asyncio
import random
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .config import ConfigError, HarnessConfig
from .datasets import GenSpec, generate, scenario_to_json
from .drivers import DriverRequest, decision_payload
from .harness import build_driver
from .poc import (
    COLOR_PALETTE,
    X_GRID,
    Y_GRID,
    DetectedObject,
    OfficerSignal,
    PocCommand,
    PocScene,
    command_to_raw,
    scene_to_json,
)
from .policy import target_lane_for
from .prompts import Decision, PromptConfig
from .rollout import ViolationKind
from .world import (
    LANE_CHANGE_ACTIONS,
    TICK_SECONDS,
    Action,
    Scenario,
    TaskFamily,
    lane_of,
    step_with_collisions,
)


class CreateSessionRequest(BaseModel):
    mode: str = "highway"
    seed: int = 0
    driver: str = "oracle"


class InstructionRequest(BaseModel):
    text: str


class OfficerRequest(BaseModel):
    signal: str


class ResetRequest(BaseModel):
    seed: int | None = None


@dataclass
class Session:
    session_id: str
    mode: str
    seed: int
    driver_spec: str
    driver: object
    prompt_cfg: PromptConfig
    scenario: Scenario | None = None
    scene: PocScene | None = None
    tick: int = 0
    overspeed_streak: int = 0
    latest_decision: dict | None = None
    violations: list[dict] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    subscribers: list[asyncio.Queue] = field(default_factory=list)


def make_highway_scenario(seed: int, config: HarnessConfig) -> Scenario:
    spec = GenSpec(
        task_family=TaskFamily.COMBINED, count=1, seed=seed, misleading_instruction_prob=0.0
    )
    scenario = generate(spec, config.policy)[0]
    return replace(scenario, id=f"session-{seed}", instruction=None)


def make_poc_scene(seed: int) -> PocScene:
    """Three color cones with distinct colors, officer absent."""
    rng = random.Random(seed)
    colors = rng.sample(COLOR_PALETTE, 3)
    xs = rng.sample(X_GRID, 3)
    objects = tuple(
        DetectedObject(id=i + 1, category="color cone", color=colors[i], x=xs[i],
                       y=rng.choice(Y_GRID))
        for i in range(3)
    )
    return PocScene(
        id=f"session-{seed}",
        objects=objects,
        officer=OfficerSignal.ABSENT,
        instruction=None,
        ground_truth=PocCommand.stop(),
        seed=seed,
    )


def _session_state(session: Session) -> dict:
    if session.mode == "highway":
        scenario = session.scenario
        payload = scenario_to_json(scenario)
        payload.pop("ground_truth", None)
        return {
            "session_id": session.session_id,
            "mode": "highway",
            "tick": session.tick,
            "driver": session.driver_spec,
            "ego": {
                "lane": scenario.ego.lane.value,
                "speed_kmh": scenario.ego.speed,
                "odometer_m": scenario.ego.odometer,
            },
            "vehicles": payload["vehicles"],
            "rules": payload["rules"],
            "instruction": scenario.instruction,
            "latest_decision": session.latest_decision,
            "violations": list(session.violations),
        }
    payload = scene_to_json(session.scene)
    payload.pop("ground_truth", None)
    return {
        "session_id": session.session_id,
        "mode": "poc",
        "tick": session.tick,
        "driver": session.driver_spec,
        "objects": payload["objects"],
        "officer": session.scene.officer.value,
        "instruction": session.scene.instruction,
        "latest_decision": session.latest_decision,
        "violations": list(session.violations),
    }


def _not_found(session_id: str) -> HTTPException:
    return HTTPException(
        status_code=404,
        detail={"code": "session_not_found", "message": f"no session {session_id!r}"},
    )


def _bad_request(code: str, message: str) -> HTTPException:
    return HTTPException(status_code=400, detail={"code": code, "message": message})


def create_app(config: HarnessConfig | None = None, static_dir: str | None = None) -> FastAPI:
    config = config or HarnessConfig()
    app = FastAPI(title="drivebench session API")
    sessions: dict[str, Session] = {}

    def _get(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise _not_found(session_id)
        return session

    def _broadcast(session: Session, event_type: str, payload: dict) -> None:
        event = {"type": event_type, "payload": payload}
        for queue in list(session.subscribers):
            queue.put_nowait(event)

    def _record_decision(session: Session, prompt: str, raw: str, parsed_payload: dict) -> dict:
        decision = {
            "prompt": prompt,
            "raw_response": raw,
            "driver": session.driver_spec,
            "tick": session.tick,
            **parsed_payload,
        }
        session.latest_decision = decision
        session.history.append(decision)
        _broadcast(session, "decision", decision)
        return decision

    async def _drive_highway(session: Session) -> tuple[dict, Decision | None]:
        from .prompts import render_prompt

        snapshot = session.scenario
        prompt = render_prompt(snapshot, session.prompt_cfg)
        request = DriverRequest(
            scenario=snapshot,
            prompt=prompt,
            cfg=session.prompt_cfg,
            session_id=session.session_id,
        )
        transcript = await asyncio.to_thread(session.driver.drive, request)
        decision = _record_decision(
            session, prompt, transcript.raw_response, decision_payload(transcript.parsed)
        )
        parsed = transcript.parsed if isinstance(transcript.parsed, Decision) else None
        return decision, parsed

    def _step_violations(session: Session, action: Action, hits) -> list[dict]:
        """Per-step violation events mirrored into the session log."""
        events = []
        scenario = session.scenario
        if action in LANE_CHANGE_ACTIONS:
            target = target_lane_for(action, scenario.ego.lane)
            if target is None:
                events.append(
                    {
                        "kind": ViolationKind.OFF_ROAD_LANE_CHANGE.value,
                        "tick": session.tick,
                        "detail": f"'{action.value}' from the {scenario.ego.lane.value} lane",
                    }
                )
            else:
                env = config.policy.envelope
                occupied = [
                    v
                    for v in scenario.vehicles
                    if lane_of(scenario.ego.lane, v.rel_x) is target
                    and -env.rear_clear <= v.rel_y <= env.front_clear
                ]
                if occupied:
                    events.append(
                        {
                            "kind": ViolationKind.UNSAFE_LANE_CHANGE.value,
                            "tick": session.tick,
                            "detail": f"target lane occupied at y={occupied[0].rel_y:g} m",
                        }
                    )
        for hit in hits:
            events.append(
                {
                    "kind": ViolationKind.COLLISION.value,
                    "tick": session.tick,
                    "detail": f"collision with {hit.category} at y={hit.rel_y:.1f} m",
                }
            )
        return events

    def _track_overspeed(session: Session) -> list[dict]:
        limit = session.scenario.rules.speed_limit
        if limit is None or session.tick == 0:
            return []
        if session.scenario.ego.speed > limit + config.policy.limit_tolerance:
            session.overspeed_streak += 1
            if session.overspeed_streak == 2:
                return [
                    {
                        "kind": ViolationKind.SPEED_LIMIT_EXCEEDED.value,
                        "tick": session.tick,
                        "detail": f"speed {session.scenario.ego.speed:g} km/h above "
                        f"limit {limit:g} km/h for two consecutive ticks",
                    }
                ]
        else:
            session.overspeed_streak = 0
        return []

    @app.post("/api/sessions")
    async def create_session(body: CreateSessionRequest) -> dict:
        if body.mode not in ("highway", "poc"):
            raise _bad_request("unknown_mode", f"mode must be 'highway' or 'poc', got {body.mode!r}")
        try:
            driver = build_driver(body.driver, config, "poc" if body.mode == "poc" else "highway")
        except ConfigError as exc:
            raise _bad_request("bad_driver", str(exc))
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            mode=body.mode,
            seed=body.seed,
            driver_spec=body.driver,
            driver=driver,
            prompt_cfg=PromptConfig(reasoning_requested=True, template_version=config.template_version),
        )
        if body.mode == "highway":
            session.scenario = make_highway_scenario(body.seed, config)
        else:
            session.scene = make_poc_scene(body.seed)
        sessions[session.session_id] = session
        return {"session_id": session.session_id}

    @app.get("/api/sessions/{session_id}/state")
    async def get_state(session_id: str) -> dict:
        return _session_state(_get(session_id))

    @app.post("/api/sessions/{session_id}/instruction")
    async def post_instruction(session_id: str, body: InstructionRequest) -> dict:
        session = _get(session_id)
        async with session.lock:
            if session.mode == "highway":
                session.scenario = replace(session.scenario, instruction=body.text or None)
                decision, _ = await _drive_highway(session)
            else:
                session.scene = replace(session.scene, instruction=body.text or None)
                from .poc import render_poc_prompt

                transcript = await asyncio.to_thread(session.driver.answer, session.scene)
                if isinstance(transcript.parsed, PocCommand):
                    parsed_payload: dict = {
                        "command": {
                            "action": transcript.parsed.action,
                            **(
                                {"destination_id": transcript.parsed.destination_id}
                                if transcript.parsed.destination_id is not None
                                else {}
                            ),
                        }
                    }
                else:
                    parsed_payload = {
                        "error": {
                            "kind": transcript.parsed.kind,
                            "detail": transcript.parsed.detail,
                        }
                    }
                decision = _record_decision(
                    session, transcript.prompt, transcript.raw_response, parsed_payload
                )
            _broadcast(session, "state", _session_state(session))
            return {"decision": decision, "state": _session_state(session)}

    @app.post("/api/sessions/{session_id}/officer")
    async def post_officer(session_id: str, body: OfficerRequest) -> dict:
        session = _get(session_id)
        if session.mode != "poc":
            raise _bad_request("mode_mismatch", "officer signal only applies to poc sessions")
        try:
            signal = OfficerSignal(body.signal)
        except ValueError:
            raise _bad_request("unknown_signal", f"signal must be absent|go|stop, got {body.signal!r}")
        async with session.lock:
            session.scene = replace(session.scene, officer=signal)
            _broadcast(session, "state", _session_state(session))
            return {"state": _session_state(session)}

    @app.post("/api/sessions/{session_id}/step")
    async def post_step(session_id: str) -> dict:
        session = _get(session_id)
        if session.mode != "highway":
            raise _bad_request("mode_mismatch", "poc sessions have no dynamics to step")
        async with session.lock:
            _, parsed = await _drive_highway(session)
            action = parsed.action if parsed is not None else Action.MAINTAIN
            scenario = session.scenario
            ego, vehicles, hits = step_with_collisions(
                scenario.ego, scenario.vehicles, action, TICK_SECONDS
            )
            events = _step_violations(session, action, hits)
            session.scenario = replace(scenario, ego=ego, vehicles=vehicles)
            session.tick += 1
            events.extend(_track_overspeed(session))
            for event in events:
                session.violations.append(event)
                _broadcast(session, "violation", event)
            _broadcast(session, "state", _session_state(session))
            return {"state": _session_state(session), "events": events}

    @app.post("/api/sessions/{session_id}/reset")
    async def post_reset(session_id: str, body: ResetRequest) -> dict:
        session = _get(session_id)
        async with session.lock:
            seed = body.seed if body.seed is not None else session.seed
            session.seed = seed
            session.tick = 0
            session.overspeed_streak = 0
            session.latest_decision = None
            session.violations.clear()
            session.history.clear()
            if session.mode == "highway":
                session.scenario = make_highway_scenario(seed, config)
            else:
                session.scene = make_poc_scene(seed)
            _broadcast(session, "state", _session_state(session))
            return {"state": _session_state(session)}

    @app.get("/api/sessions/{session_id}/transcript")
    async def get_transcript(session_id: str) -> dict:
        session = _get(session_id)
        return {"session_id": session.session_id, "history": list(session.history)}

    @app.websocket("/ws/sessions/{session_id}")
    async def session_events(websocket: WebSocket, session_id: str) -> None:
        session = sessions.get(session_id)
        if session is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        queue: asyncio.Queue = asyncio.Queue()
        session.subscribers.append(queue)
        try:
            await websocket.send_json({"type": "state", "payload": _session_state(session)})
            while True:
                event = await queue.get()
                await websocket.send_json(event)
        except WebSocketDisconnect:
            pass
        finally:
            if queue in session.subscribers:
                session.subscribers.remove(queue)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")
    return app
