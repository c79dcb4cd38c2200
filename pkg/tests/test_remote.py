from __future__ import annotations

import base64
import json
import threading

import httpx
import pytest

from ospo.backend import DecodeParams, ImageArtifact
from ospo.errors import BackendUnavailable, RemoteRejected, Timeout
from ospo.prompts import Entity, StructuredPrompt, rendered
from ospo.remote import RemoteBackend, RemoteConfig

PROMPT = rendered(StructuredPrompt("Attribute", (Entity("car", (("color", "red"),)),)))


def client(url, sleeps=None, **kw):
    sleeps = [] if sleeps is None else sleeps
    return RemoteBackend(RemoteConfig(url, **kw), sleep=sleeps.append)


def test_three_endpoints_round_trip(mock_server):
    with client(mock_server.url) as be:
        assert be.text_complete([("user", "hello")], seed=3) == "echo: hello"
        img = be.generate_image(PROMPT, DecodeParams(seed=11))
        assert img.token_sequence == (1, 3, 7, 2)
        sent = json.loads(img.payload)
        assert sent == {"prompt": "a red car", "guidance_weight": 5.0, "temperature": 1.0, "seed": 11}
        assert be.vqa_probe(img, "Is the car red?") == (0.7, 0.2)  # raw, not renormalized
    path, body, _ = mock_server.requests[-1]
    assert path == "/v1/vqa"
    assert base64.b64decode(body["image_b64"]) == img.payload
    assert body["question"] == "Is the car red?"


def test_text_request_shape(mock_server):
    with client(mock_server.url) as be:
        be.text_complete([("system", "s"), ("user", "u")], seed=9)
    assert mock_server.requests[0][1] == {"messages": [{"role": "system", "text": "s"},
                                                      {"role": "user", "text": "u"}], "seed": 9}


def test_bearer_token_from_env(mock_server, monkeypatch):
    monkeypatch.setenv("MY_TOKEN", "sekrit")
    with client(mock_server.url, token_env="MY_TOKEN") as be:
        be.text_complete([("user", "x")])
    assert mock_server.requests[0][2]["Authorization"] == "Bearer sekrit"


def test_429_and_reset_retried_with_backoff(mock_server):
    mock_server.script["/v1/text"] = [429, "reset", 503]
    sleeps = []
    with client(mock_server.url, sleeps) as be:
        assert be.text_complete([("user", "again")]) == "echo: again"
    assert mock_server.count("/v1/text") == 4
    assert sleeps == [0.5, 1.0, 2.0]
    outcomes = [o for _, o in be.attempt_log]
    assert outcomes[0] == "429" and outcomes[2] == "503" and outcomes[-1] == "200"
    assert outcomes[1] not in ("200", "429", "503")  # transport-level failure


def test_400_is_not_retried(mock_server):
    mock_server.script["/v1/vqa"] = [400]
    sleeps = []
    with client(mock_server.url, sleeps) as be:
        with pytest.raises(RemoteRejected) as err:
            be.vqa_probe(ImageArtifact("x", b"png", "", DecodeParams()), "Is there a car?")
    assert err.value.status == 400
    assert mock_server.count("/v1/vqa") == 1
    assert sleeps == []


def test_budget_exhausted(mock_server):
    mock_server.script["/v1/text"] = [500] * 10
    with client(mock_server.url, max_attempts=3) as be:
        with pytest.raises(BackendUnavailable):
            be.text_complete([("user", "x")])
    assert mock_server.count("/v1/text") == 3


def test_slow_server_times_out(mock_server):
    mock_server.script["/v1/text"] = [("slow", 0.5), ("slow", 0.5)]
    with client(mock_server.url, timeout=0.1, max_attempts=2) as be:
        with pytest.raises(Timeout):
            be.text_complete([("user", "x")])


def test_unreachable_server():
    with client("http://127.0.0.1:9", max_attempts=2) as be:
        with pytest.raises(BackendUnavailable):
            be.text_complete([("user", "x")])


def test_backoff_capped():
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(502)

    sleeps = []
    be = RemoteBackend(RemoteConfig("http://mock", max_attempts=7, backoff_max=3.0),
                       transport=httpx.MockTransport(handler), sleep=sleeps.append)
    with pytest.raises(BackendUnavailable):
        be.text_complete([("user", "x")])
    assert sleeps == [0.5, 1.0, 2.0, 3.0, 3.0, 3.0]
    assert len(calls) == 7


def test_in_flight_cap(mock_server):
    mock_server.script["/v1/text"] = [("slow", 0.15)] * 12
    with client(mock_server.url, max_in_flight=2) as be:
        threads = [threading.Thread(target=be.text_complete, args=([("user", str(i))],)) for i in range(12)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    assert mock_server.count("/v1/text") == 12
    assert mock_server.peak <= 2


def test_empty_messages_rejected(mock_server):
    with client(mock_server.url) as be:
        with pytest.raises(ValueError):
            be.text_complete([])
