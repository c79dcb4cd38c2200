"""HTTP client for a remote text / image / VQA inference server.

Wire protocol (JSON bodies):

``POST /v1/text``   ``{messages: [{role, text}], seed}`` -> ``{text}``
``POST /v1/images`` ``{prompt, guidance_weight, temperature, seed}`` -> ``{image_b64, token_ids?}``
``POST /v1/vqa``    ``{image_id | image_b64, question}`` -> ``{p_yes, p_no}``
"""

from __future__ import annotations

import base64
import hashlib
import logging
import os
import threading
import time
from dataclasses import dataclass

import httpx

from ospo.backend import CorruptionParams, DecodeParams, ImageArtifact
from ospo.errors import BackendUnavailable, RemoteRejected, Timeout
from ospo.prompts import StructuredPrompt

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RemoteConfig:
    base_url: str
    token_env: str = "OSPO_API_TOKEN"
    timeout: float = 120.0
    max_attempts: int = 4
    max_in_flight: int = 8
    backoff_base: float = 0.5
    backoff_max: float = 8.0

    def __post_init__(self):
        if self.max_attempts < 1 or self.max_in_flight < 1:
            raise ValueError("max_attempts and max_in_flight must be >= 1")


def _retryable(status: int) -> bool:
    return status == 429 or status >= 500


class RemoteBackend:
    """Thread-safe client; at most ``max_in_flight`` requests are outstanding at once."""

    def __init__(self, config: RemoteConfig, transport: httpx.BaseTransport | None = None, sleep=time.sleep):
        self.config = config
        headers = {}
        token = os.environ.get(config.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(base_url=config.base_url, timeout=config.timeout, headers=headers,
                                    transport=transport)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._sleep = sleep
        self.attempt_log: list[tuple[str, str]] = []

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post(self, path: str, body: dict) -> dict:
        cfg = self.config
        last: Exception | None = None
        timed_out = False
        for attempt in range(cfg.max_attempts):
            if attempt:
                self._sleep(min(cfg.backoff_max, cfg.backoff_base * 2 ** (attempt - 1)))
            try:
                with self._slots:
                    resp = self._client.post(path, json=body)
            except httpx.TimeoutException as exc:
                self.attempt_log.append((path, "timeout"))
                last, timed_out = exc, True
                continue
            except httpx.TransportError as exc:
                self.attempt_log.append((path, type(exc).__name__))
                last, timed_out = exc, False
                continue
            self.attempt_log.append((path, str(resp.status_code)))
            if resp.status_code < 400:
                return resp.json()
            if not _retryable(resp.status_code):
                raise RemoteRejected(resp.status_code, resp.text)
            last, timed_out = RemoteRejected(resp.status_code, resp.text), False
            log.warning("retrying %s after status %s", path, resp.status_code)
        msg = f"{path} failed after {cfg.max_attempts} attempts: {last}"
        if timed_out:
            raise Timeout(msg)
        raise BackendUnavailable(msg)

    def text_complete(self, messages, seed: int = 0) -> str:
        if not messages:
            raise ValueError("text_complete needs at least one message")
        body = {"messages": [{"role": r, "text": t} for r, t in messages], "seed": int(seed)}
        return self._post("/v1/text", body)["text"]

    def generate_image(self, dense: StructuredPrompt, decode: DecodeParams,
                       corruption: CorruptionParams | None = None, source_prompt_id: str = "") -> ImageArtifact:
        body = {"prompt": dense.surface, "guidance_weight": decode.guidance_weight,
                "temperature": decode.temperature, "seed": int(decode.seed)}
        out = self._post("/v1/images", body)
        data = base64.b64decode(out["image_b64"])
        tokens = out.get("token_ids")
        return ImageArtifact("img-" + hashlib.blake2b(data, digest_size=8).hexdigest(), data, source_prompt_id,
                             decode, tuple(tokens) if tokens is not None else None)

    def vqa_probe(self, image: ImageArtifact, question: str) -> tuple[float, float]:
        if not isinstance(image.payload, (bytes, bytearray)):
            raise ValueError("remote VQA needs image bytes")
        out = self._post("/v1/vqa", {"image_b64": base64.b64encode(image.payload).decode("ascii"),
                                     "question": question})
        return float(out["p_yes"]), float(out["p_no"])
