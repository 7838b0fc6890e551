"""Assistant access: one interface over an HTTP chat backend and a scripted mock.

The HTTP side speaks a chat-completions-style JSON endpoint
(``POST {base_url}/chat/completions``) and reads its API key from the
``CAP2QA_API_KEY`` environment variable. The mock side replays scripted
responses, either in order or keyed by the SHA-256 of the prompt text, which
makes whole pipeline runs deterministic.

Transient HTTP failures (timeouts, 429, 5xx) are retried with jittered
exponential backoff; 401/403 are not. An optional on-disk cache keyed by
:func:`cache_key` makes repeated runs idempotent, and a shared rate limiter
caps network calls per minute across worker threads.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import requests

from .clocks import Clock, SystemClock
from .errors import (
    AuthFailureError,
    BackendUnavailableError,
    MalformedLineError,
    ResponseEmptyError,
    ScriptExhaustedError,
    SchemaViolationError,
)

API_KEY_ENV = "CAP2QA_API_KEY"
RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class AssistantRequest:
    prompt_text: str
    model_id: str
    temperature: float = 0.0
    max_output_tokens: int = 512

    def __post_init__(self):
        if not self.prompt_text:
            raise ValueError("prompt_text must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class AssistantResponse:
    text: str
    backend_latency: float
    from_cache: bool


def prompt_hash(prompt_text: str) -> str:
    return hashlib.sha256(prompt_text.encode("utf-8")).hexdigest()


def cache_key(request: AssistantRequest) -> str:
    """Stable 256-bit digest of everything that shapes the response."""
    payload = json.dumps(
        {
            "prompt_text": request.prompt_text,
            "model_id": request.model_id,
            "temperature": request.temperature,
            "max_output_tokens": request.max_output_tokens,
        },
        ensure_ascii=False,
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class MockScript:
    """Scripted responses, consumed in order or looked up by prompt hash.

    Hash-keyed entries win over the ordered queue; ordered consumption is
    serialized with a lock so concurrent workers each get one entry (in an
    order that then depends on scheduling — use hash keys when byte-stable
    output across worker counts matters).
    """

    def __init__(self, responses=(), by_hash=None):
        self._queue = deque(responses)
        self._by_hash = dict(by_hash or {})
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        """Load a JSONL script of ``{response_text, prompt_hash?}`` entries."""
        responses: list[str] = []
        by_hash: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedLineError(path, line_no, exc.msg) from exc
                if "response_text" not in obj:
                    raise SchemaViolationError(f"{path}:{line_no}: entry missing 'response_text'")
                if obj.get("prompt_hash"):
                    by_hash[str(obj["prompt_hash"])] = str(obj["response_text"])
                else:
                    responses.append(str(obj["response_text"]))
        return cls(responses, by_hash)

    def next_for(self, prompt_text: str) -> str:
        key = prompt_hash(prompt_text)
        with self._lock:
            if key in self._by_hash:
                return self._by_hash[key]
            if not self._queue:
                raise ScriptExhaustedError("mock script has no response left")
            return self._queue.popleft()


@dataclass(frozen=True)
class BackendSpec:
    kind: str  # "http" | "mock"
    base_url: str | None = None
    script: MockScript | None = None

    def __post_init__(self):
        if self.kind == "http":
            if not self.base_url:
                raise ValueError("http backend requires base_url")
        elif self.kind == "mock":
            if self.script is None:
                raise ValueError("mock backend requires a script")
        else:
            raise ValueError(f"unknown backend kind {self.kind!r}")


class ResponseCache:
    """Content-addressed response store: one JSON file per cache key."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)["text"]
        except (OSError, json.JSONDecodeError, KeyError):
            return None

    def put(self, key: str, text: str) -> None:
        path = self._path(key)
        tmp = path.with_suffix(f".tmp-{os.getpid()}-{threading.get_ident()}")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump({"text": text}, fh, ensure_ascii=False)
        os.replace(tmp, path)


class RateLimiter:
    """Sliding-window limiter: at most ``rpm`` acquisitions per 60 s."""

    def __init__(self, rpm: int, clock: Clock | None = None):
        if rpm <= 0:
            raise ValueError("rpm must be positive")
        self.rpm = rpm
        self.clock = clock or SystemClock()
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock.monotonic()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.rpm:
                    self._stamps.append(now)
                    return
                wait = self._stamps[0] + 60.0 - now
            self.clock.sleep(max(wait, 0.001))


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_delay: float = 0.5
    max_delay: float = 60.0

    def delay(self, attempt: int, rng: random.Random) -> float:
        # attempt is 1-based; full jitter on an exponential ramp, capped.
        return rng.uniform(0, min(self.max_delay, self.base_delay * 2 ** (attempt - 1)))


class AssistantClient:
    """Thread-safe assistant frontend with caching, retries and rate limiting.

    Safe to share across workers: the mock script, the cache and the rate
    limiter are internally synchronized.
    """

    def __init__(
        self,
        backend: BackendSpec,
        *,
        cache_dir: str | Path | None = None,
        rate_limit_rpm: int | None = None,
        retry: RetryPolicy | None = None,
        clock: Clock | None = None,
        session=None,
        timeout: float = 120.0,
        rng: random.Random | None = None,
    ):
        self.backend = backend
        self.clock = clock or SystemClock()
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self.limiter = RateLimiter(rate_limit_rpm, self.clock) if rate_limit_rpm else None
        self.retry = retry or RetryPolicy()
        self.timeout = timeout
        self._session = session if session is not None else requests.Session()
        self._rng = rng or random.Random()

    def complete(self, request: AssistantRequest) -> AssistantResponse:
        """Return the assistant's text for a request, from cache when possible."""
        key = cache_key(request) if self.cache else None
        if key is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return AssistantResponse(text=cached, backend_latency=0.0, from_cache=True)

        start = self.clock.monotonic()
        if self.backend.kind == "mock":
            text = self.backend.script.next_for(request.prompt_text)
        else:
            text = self._complete_http(request)
        if not text:
            raise ResponseEmptyError("backend returned an empty response")
        latency = self.clock.monotonic() - start

        if key is not None:
            self.cache.put(key, text)
        return AssistantResponse(text=text, backend_latency=latency, from_cache=False)

    def _complete_http(self, request: AssistantRequest) -> str:
        url = self.backend.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

        last_problem = "no attempt made"
        for attempt in range(1, self.retry.max_attempts + 1):
            if self.limiter:
                self.limiter.acquire()
            try:
                response = self._session.post(url, json=payload, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_problem = f"{type(exc).__name__}: {exc}"
            else:
                status = response.status_code
                if status in (401, 403):
                    raise AuthFailureError(f"{url} rejected credentials (HTTP {status})")
                if status == 200:
                    return self._extract_text(response, url)
                if status not in RETRYABLE_STATUS:
                    raise BackendUnavailableError(f"{url} returned HTTP {status}")
                last_problem = f"HTTP {status}"
            if attempt < self.retry.max_attempts:
                self.clock.sleep(self.retry.delay(attempt, self._rng))
        raise BackendUnavailableError(
            f"{url} unavailable after {self.retry.max_attempts} attempts ({last_problem})"
        )

    @staticmethod
    def _extract_text(response, url: str) -> str:
        try:
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailableError(f"{url} returned an unexpected body ({exc})") from exc


def complete(request: AssistantRequest, backend: BackendSpec, **kwargs) -> AssistantResponse:
    """One-shot convenience wrapper around :class:`AssistantClient`."""
    return AssistantClient(backend, **kwargs).complete(request)
