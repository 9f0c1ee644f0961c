"""Uniform client for teacher and student text-generation endpoints.

Speaks the ubiquitous chat-completion wire shape over HTTP so any hosted
or locally served model can act as teacher or student, and provides a
fully deterministic in-process mock for offline runs and tests. Retries,
backoff, and per-endpoint admission limiting live here so callers can
fan out requests freely.
"""

from __future__ import annotations

import hashlib
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import requests

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class TransportError(RuntimeError):
    """Transient failure that survived every retry."""


class AuthError(RuntimeError):
    """401/403 from the endpoint; never retried."""


class ProtocolError(RuntimeError):
    """Response body did not match the chat-completion shape."""


class UnmatchedPrompt(KeyError):
    """A mock endpoint received a prompt no script pattern covers."""


@dataclass(frozen=True)
class ModelEndpoint:
    """Connection settings for one model endpoint.

    Auth tokens are read from the environment variable named by
    ``auth_token_env``, never stored in config files. Endpoints with a
    ``mock://`` base URL dispatch to an in-process scripted transport.
    """

    base_url: str
    model_name: str
    auth_token_env: str = ""
    max_concurrency: int = 4
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    backoff_jitter: float = 0.2

    def __post_init__(self):
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def is_mock(self) -> bool:
        return self.base_url.startswith("mock://")


@dataclass(frozen=True)
class GenRequest:
    prompt: str
    temperature: float = 0.7
    n_samples: int = 1
    max_tokens: int = 512

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class GenResponse:
    completions: tuple[str, ...]
    usage: dict = field(default_factory=dict)
    attempts: int = 1

    def __post_init__(self):
        if isinstance(self.completions, list):
            object.__setattr__(self, "completions", tuple(self.completions))


Responder = Union[str, Sequence[str], Callable[[str, GenRequest], Sequence[str]]]


class MockTransport:
    """Scripted, deterministic stand-in for a remote endpoint.

    The script is an ordered list of ``(pattern, responder)`` pairs; the
    first pattern found in the prompt (regex search) wins. Every request
    is recorded for assertions, along with the high-water mark of
    concurrent in-flight requests.
    """

    def __init__(self, script: Sequence[tuple[str, Responder]]):
        self.script = [(re.compile(p, re.DOTALL), r) for p, r in script]
        self.requests: list[tuple[str, GenRequest]] = []
        self._lock = threading.Lock()
        self._inflight = 0
        self.max_inflight = 0

    def handle(self, req: GenRequest) -> GenResponse:
        with self._lock:
            self.requests.append((req.prompt, req))
            self._inflight += 1
            self.max_inflight = max(self.max_inflight, self._inflight)
        try:
            for pattern, responder in self.script:
                if pattern.search(req.prompt):
                    return self._respond(responder, req)
            raise UnmatchedPrompt(f"no script pattern matches prompt: {req.prompt[:120]!r}")
        finally:
            with self._lock:
                self._inflight -= 1

    def _respond(self, responder: Responder, req: GenRequest) -> GenResponse:
        if callable(responder):
            out = list(responder(req.prompt, req))
        elif isinstance(responder, str):
            out = [responder]
        else:
            out = list(responder)
        # Pad or trim so the contract |completions| == n_samples holds.
        while len(out) < req.n_samples:
            out.append(out[-1] if out else "")
        out = out[: req.n_samples]
        usage = {
            "prompt_tokens": len(req.prompt.split()),
            "completion_tokens": sum(len(c.split()) for c in out),
        }
        return GenResponse(completions=tuple(out), usage=usage)


_MOCKS: dict[str, MockTransport] = {}
_MOCKS_LOCK = threading.Lock()


def mock_endpoint(
    script: Sequence[tuple[str, Responder]],
    name: str = "mock",
    max_concurrency: int = 4,
) -> ModelEndpoint:
    """Register a scripted transport and return an endpoint addressing it."""
    endpoint = ModelEndpoint(
        base_url=f"mock://{name}",
        model_name=name,
        max_concurrency=max_concurrency,
        timeout=30.0,
        max_retries=0,
    )
    with _MOCKS_LOCK:
        _MOCKS[endpoint.base_url] = MockTransport(script)
    return endpoint


def register_mock(base_url: str, transport: MockTransport) -> None:
    with _MOCKS_LOCK:
        _MOCKS[base_url] = transport


def get_mock(endpoint: ModelEndpoint) -> MockTransport:
    with _MOCKS_LOCK:
        try:
            return _MOCKS[endpoint.base_url]
        except KeyError:
            raise TransportError(f"no mock registered at {endpoint.base_url}") from None


def echo_mock(name: str = "echo") -> ModelEndpoint:
    """Mock whose completions are a deterministic digest of the prompt."""

    def respond(prompt: str, req: GenRequest) -> list[str]:
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]
        return [f"echo:{digest}"] * req.n_samples

    return mock_endpoint([(r".", respond)], name=name)


# One admission limiter per endpoint so concurrent callers cannot exceed
# the endpoint's max_concurrency.
_LIMITERS: dict[ModelEndpoint, threading.BoundedSemaphore] = {}
_LIMITERS_LOCK = threading.Lock()


def _limiter(endpoint: ModelEndpoint) -> threading.BoundedSemaphore:
    with _LIMITERS_LOCK:
        sem = _LIMITERS.get(endpoint)
        if sem is None:
            sem = threading.BoundedSemaphore(endpoint.max_concurrency)
            _LIMITERS[endpoint] = sem
        return sem


def backoff_delay(endpoint: ModelEndpoint, attempt: int, rng: Optional[random.Random] = None) -> float:
    """Delay before retry number ``attempt`` (0-based), jittered ±20%."""
    rng = rng or random
    base = endpoint.backoff_base * (endpoint.backoff_factor ** attempt)
    return base * (1.0 + endpoint.backoff_jitter * (2.0 * rng.random() - 1.0))


# Running totals across all generate() calls in this process, keyed by
# usage field (prompt_tokens, completion_tokens, ...) plus request count.
_USAGE: dict[str, float] = {}
_USAGE_LOCK = threading.Lock()


def reset_usage() -> None:
    with _USAGE_LOCK:
        _USAGE.clear()


def usage_total() -> dict[str, float]:
    with _USAGE_LOCK:
        return dict(_USAGE)


def _record_usage(resp: GenResponse) -> None:
    with _USAGE_LOCK:
        _USAGE["requests"] = _USAGE.get("requests", 0) + 1
        for k, v in resp.usage.items():
            if isinstance(v, (int, float)):
                _USAGE[k] = _USAGE.get(k, 0) + v


def generate(endpoint: ModelEndpoint, req: GenRequest) -> GenResponse:
    """Request ``req.n_samples`` completions from the endpoint.

    Transient failures (429/5xx, timeouts, connection errors) are retried
    with exponential backoff up to ``max_retries``; 401/403 fail
    immediately. Servers that ignore the n-sampling parameter are handled
    by issuing follow-up single-sample calls until the count is met.
    """
    with _limiter(endpoint):
        resp = _generate_once(endpoint, req)
        while len(resp.completions) < req.n_samples:
            single = GenRequest(
                prompt=req.prompt,
                temperature=req.temperature,
                n_samples=1,
                max_tokens=req.max_tokens,
            )
            extra = _generate_once(endpoint, single)
            usage = _merge_usage(resp.usage, extra.usage)
            resp = GenResponse(
                completions=resp.completions + extra.completions,
                usage=usage,
                attempts=resp.attempts + extra.attempts,
            )
    _record_usage(resp)
    return resp


def _merge_usage(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        if isinstance(v, (int, float)):
            out[k] = out.get(k, 0) + v
    return out


def _generate_once(endpoint: ModelEndpoint, req: GenRequest) -> GenResponse:
    if endpoint.is_mock:
        resp = get_mock(endpoint).handle(req)
        return resp

    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    body = {
        "model": endpoint.model_name,
        "messages": [{"role": "user", "content": req.prompt}],
        "temperature": req.temperature,
        "n": req.n_samples,
        "max_tokens": req.max_tokens,
    }
    headers = {"Content-Type": "application/json"}
    if endpoint.auth_token_env:
        token = os.environ.get(endpoint.auth_token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"

    last_error: Optional[Exception] = None
    attempts = 0
    for attempt in range(endpoint.max_retries + 1):
        attempts += 1
        try:
            http = requests.post(url, json=body, headers=headers, timeout=endpoint.timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_error = exc
            if attempt < endpoint.max_retries:
                time.sleep(backoff_delay(endpoint, attempt))
            continue
        if http.status_code in (401, 403):
            raise AuthError(f"{http.status_code} from {url}")
        if http.status_code in RETRYABLE_STATUS:
            last_error = TransportError(f"HTTP {http.status_code} from {url}")
            if attempt < endpoint.max_retries:
                time.sleep(backoff_delay(endpoint, attempt))
            continue
        if http.status_code != 200:
            raise TransportError(f"HTTP {http.status_code} from {url}: {http.text[:200]}")
        return _parse_response(http, attempts)
    raise TransportError(
        f"giving up on {url} after {attempts} attempts: {last_error}"
    )


def _parse_response(http: requests.Response, attempts: int) -> GenResponse:
    try:
        payload = http.json()
    except ValueError as exc:
        raise ProtocolError(f"response is not JSON: {http.text[:200]}") from exc
    try:
        completions = tuple(c["message"]["content"] for c in payload["choices"])
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed completion body: {payload!r:.200}") from exc
    if not completions:
        raise ProtocolError("response carried no choices")
    usage = payload.get("usage") or {}
    return GenResponse(completions=completions, usage=dict(usage), attempts=attempts)
