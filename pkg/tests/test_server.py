import pytest
from fastapi.testclient import TestClient

from drivebench.config import HarnessConfig
from drivebench.server import create_app


@pytest.fixture
def client():
    return TestClient(create_app(HarnessConfig()))


def create_session(client, mode="highway", seed=0, driver="oracle") -> str:
    resp = client.post("/api/sessions", json={"mode": mode, "seed": seed, "driver": driver})
    assert resp.status_code == 200
    return resp.json()["session_id"]


class TestSessionLifecycle:
    def test_create_and_state(self, client):
        sid = create_session(client)
        state = client.get(f"/api/sessions/{sid}/state").json()
        assert state["mode"] == "highway"
        assert state["tick"] == 0
        assert state["ego"]["speed_kmh"] > 0
        assert "rules" in state and "vehicles" in state
        assert "ground_truth" not in state

    def test_unknown_session_404(self, client):
        resp = client.get("/api/sessions/nope/state")
        assert resp.status_code == 404
        assert resp.json()["detail"]["code"] == "session_not_found"

    def test_unknown_mode_rejected(self, client):
        resp = client.post("/api/sessions", json={"mode": "submarine"})
        assert resp.status_code == 400

    def test_reset_same_seed_reproduces(self, client):
        sid = create_session(client, seed=5)
        first = client.get(f"/api/sessions/{sid}/state").json()
        client.post(f"/api/sessions/{sid}/step")
        client.post(f"/api/sessions/{sid}/reset", json={"seed": 5})
        again = client.get(f"/api/sessions/{sid}/state").json()
        assert again["ego"] == first["ego"]
        assert again["vehicles"] == first["vehicles"]
        assert again["tick"] == 0


class TestHighwaySession:
    def test_step_advances_world(self, client):
        sid = create_session(client, seed=1)
        before = client.get(f"/api/sessions/{sid}/state").json()
        resp = client.post(f"/api/sessions/{sid}/step")
        assert resp.status_code == 200
        after = resp.json()["state"]
        assert after["tick"] == 1
        assert after["ego"]["odometer_m"] > before["ego"]["odometer_m"]
        assert after["latest_decision"] is not None

    def test_instruction_produces_decision(self, client):
        sid = create_session(client, seed=2)
        state = client.get(f"/api/sessions/{sid}/state").json()
        resp = client.post(f"/api/sessions/{sid}/instruction", json={"text": "slow down"})
        assert resp.status_code == 200
        decision = resp.json()["decision"]
        limit = state["rules"]["speed_limit_kmh"]
        if limit is not None and state["ego"]["speed_kmh"] > limit + 2.0:
            assert decision["decision"]["action"] == "decelerate"
        assert resp.json()["state"]["instruction"] == "slow down"

    def test_officer_rejected_in_highway_mode(self, client):
        sid = create_session(client)
        resp = client.post(f"/api/sessions/{sid}/officer", json={"signal": "stop"})
        assert resp.status_code == 400
        assert resp.json()["detail"]["code"] == "mode_mismatch"

    def test_instruction_isolated_per_session(self, client):
        a = create_session(client, seed=3)
        b = create_session(client, seed=3)
        client.post(f"/api/sessions/{a}/instruction", json={"text": "slow down"})
        state_b = client.get(f"/api/sessions/{b}/state").json()
        assert state_b["instruction"] is None

    def test_transcript_accumulates(self, client):
        sid = create_session(client)
        client.post(f"/api/sessions/{sid}/instruction", json={"text": "keep going"})
        client.post(f"/api/sessions/{sid}/step")
        history = client.get(f"/api/sessions/{sid}/transcript").json()["history"]
        assert len(history) == 2
        assert all("prompt" in h and "raw_response" in h for h in history)


class TestPocSession:
    def test_scene_has_three_cones(self, client):
        sid = create_session(client, mode="poc", seed=4)
        state = client.get(f"/api/sessions/{sid}/state").json()
        assert state["mode"] == "poc"
        assert len(state["objects"]) == 3
        assert all(o["category"] == "color cone" for o in state["objects"])
        assert state["officer"] == "absent"

    def test_rightmost_instruction_resolves(self, client):
        sid = create_session(client, mode="poc", seed=4)
        state = client.get(f"/api/sessions/{sid}/state").json()
        rightmost = max(state["objects"], key=lambda o: o["x_m"])
        resp = client.post(
            f"/api/sessions/{sid}/instruction",
            json={"text": "Please go to the right color cone"},
        )
        command = resp.json()["decision"]["command"]
        assert command == {"action": "go", "destination_id": rightmost["id"]}

    def test_officer_stop_dominates(self, client):
        sid = create_session(client, mode="poc", seed=4)
        resp = client.post(f"/api/sessions/{sid}/officer", json={"signal": "stop"})
        assert resp.json()["state"]["officer"] == "stop"
        resp = client.post(
            f"/api/sessions/{sid}/instruction",
            json={"text": "Please go to the right color cone"},
        )
        assert resp.json()["decision"]["command"] == {"action": "stop"}

    def test_step_rejected_in_poc_mode(self, client):
        sid = create_session(client, mode="poc")
        resp = client.post(f"/api/sessions/{sid}/step")
        assert resp.status_code == 400

    def test_bad_signal_rejected(self, client):
        sid = create_session(client, mode="poc")
        resp = client.post(f"/api/sessions/{sid}/officer", json={"signal": "dance"})
        assert resp.status_code == 400


class TestEventStream:
    def test_ws_initial_state_and_events(self, client):
        sid = create_session(client, seed=6)
        with client.websocket_connect(f"/ws/sessions/{sid}") as ws:
            first = ws.receive_json()
            assert first["type"] == "state"
            assert first["payload"]["session_id"] == sid
            client.post(f"/api/sessions/{sid}/instruction", json={"text": "keep going"})
            types = [ws.receive_json()["type"], ws.receive_json()["type"]]
            assert "decision" in types and "state" in types

    def test_ws_unknown_session_closes(self, client):
        with pytest.raises(Exception):
            with client.websocket_connect("/ws/sessions/nope") as ws:
                ws.receive_json()

    def test_ws_poc_decision_stream(self, client):
        sid = create_session(client, mode="poc", seed=4)
        with client.websocket_connect(f"/ws/sessions/{sid}") as ws:
            ws.receive_json()
            client.post(
                f"/api/sessions/{sid}/instruction",
                json={"text": "go to the leftmost color cone"},
            )
            event = ws.receive_json()
            assert event["type"] == "decision"
            assert event["payload"]["command"]["action"] == "go"
