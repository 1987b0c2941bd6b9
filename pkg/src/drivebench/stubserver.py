"""Scriptable OpenAI-compatible chat-completions stub for tests.

Behaviors are consumed in order, one per request; when the script runs out
the stub answers 200 with the default content. Request payloads and arrival
times are recorded so tests can assert retry counts and backoff delays.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def ok(content: str) -> dict:
    return {"kind": "ok", "content": content}


def rate_limit() -> dict:
    return {"kind": "rate_limit"}


def hang(seconds: float) -> dict:
    return {"kind": "hang", "seconds": seconds}


def server_error(status: int = 500) -> dict:
    return {"kind": "error", "status": status}


class StubLLMServer:
    def __init__(self, behaviors: list[dict] | None = None, default_content: str = '{"action": "maintain"}'):
        self._behaviors = list(behaviors or [])
        self._default_content = default_content
        self._lock = threading.Lock()
        self.request_times: list[float] = []
        self.requests: list[dict] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", "0"))
                body = self.rfile.read(length)
                with stub._lock:
                    stub.request_times.append(time.monotonic())
                    try:
                        stub.requests.append(json.loads(body))
                    except json.JSONDecodeError:
                        stub.requests.append({})
                    behavior = stub._behaviors.pop(0) if stub._behaviors else ok(stub._default_content)
                kind = behavior["kind"]
                if kind == "hang":
                    time.sleep(behavior["seconds"])
                    kind = "ok"
                    behavior = ok(stub._default_content)
                if kind == "ok":
                    payload = {
                        "id": "stub",
                        "object": "chat.completion",
                        "choices": [
                            {
                                "index": 0,
                                "message": {"role": "assistant", "content": behavior["content"]},
                                "finish_reason": "stop",
                            }
                        ],
                    }
                    self._respond(200, payload)
                elif kind == "rate_limit":
                    self._respond(429, {"error": {"message": "rate limited"}})
                else:
                    self._respond(behavior.get("status", 500), {"error": {"message": "stub error"}})

            def _respond(self, status: int, payload: dict) -> None:
                body = json.dumps(payload).encode("utf-8")
                try:
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                except (BrokenPipeError, ConnectionResetError):
                    pass  # client timed out and hung up

            def log_message(self, *args) -> None:
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self._server.server_address[1]}/v1"

    def start(self) -> "StubLLMServer":
        self._thread.start()
        return self

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "StubLLMServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()
