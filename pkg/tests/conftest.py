from __future__ import annotations

import base64
import json
import socket
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from ospo.prompts import KeywordPools


@pytest.fixture(scope="session")
def pools():
    return KeywordPools.builtin()


class MockInference:
    """Tiny inference server. ``script[path]`` is a queue of failure actions
    consumed one per request: an int status, "reset" or ("slow", seconds)."""

    def __init__(self):
        self.script: dict[str, list] = {}
        self.requests: list[tuple[str, dict, dict]] = []
        self.lock = threading.Lock()
        self.in_flight = 0
        self.peak = 0
        mock = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])) or b"{}")
                with mock.lock:
                    mock.requests.append((self.path, body, dict(self.headers)))
                    queue = mock.script.get(self.path, [])
                    action = queue.pop(0) if queue else None
                    mock.in_flight += 1
                    mock.peak = max(mock.peak, mock.in_flight)
                try:
                    self._serve(action, body)
                finally:
                    with mock.lock:
                        mock.in_flight -= 1

            def _serve(self, action, body):
                if action == "reset":
                    self.connection.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, b"\x01\x00\x00\x00\x00\x00\x00\x00")
                    self.connection.close()
                    self.close_connection = True
                    return
                if isinstance(action, tuple) and action[0] == "slow":
                    time.sleep(action[1])
                if isinstance(action, int):
                    return self._send(action, {"error": f"scripted {action}"})
                self._send(200, mock.respond(self.path, body))

            def _send(self, status, obj):
                data = json.dumps(obj).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.server.daemon_threads = True
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}"
        self.thread = threading.Thread(target=self.server.serve_forever, args=(0.05,), daemon=True)

    def respond(self, path, body):
        if path == "/v1/text":
            return {"text": "echo: " + body["messages"][-1]["text"]}
        if path == "/v1/images":
            raw = json.dumps(body, sort_keys=True).encode()
            return {"image_b64": base64.b64encode(raw).decode(), "token_ids": [1, 3, 7, 2]}
        if path == "/v1/vqa":
            return {"p_yes": 0.7, "p_no": 0.2}
        return {}

    def count(self, path):
        return sum(1 for p, _, _ in self.requests if p == path)


@pytest.fixture
def mock_server():
    srv = MockInference()
    srv.thread.start()
    yield srv
    srv.server.shutdown()
    srv.server.server_close()


VERDICTS: dict[int, tuple[str, str]] = {}


@pytest.fixture
def verdict():
    """Record one acceptance verdict; the line is printed in the terminal summary."""
    def record(number: int, ok: bool, detail: str) -> None:
        VERDICTS[number] = ("PASS" if ok else "FAIL", detail)
        print(f"criterion {number}: {VERDICTS[number][0]} {detail}")
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        status, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
