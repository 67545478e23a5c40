"""Chat-completion backends: a real OpenAI-compatible HTTP client and a scripted fake.

Both expose the same `complete(request) -> ChatResponse` surface. The scripted
backend is a pure function of the request (first matching rule wins), which is
what makes full pipeline runs hermetic and bit-replayable.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass
from typing import Callable, Pattern, Union

import httpx

API_KEY_ENV = "VERBALGRAPH_API_KEY"


class LlmError(Exception):
    """Base class for completion failures."""


class TransportFailureError(LlmError):
    pass


class CompletionTimeoutError(LlmError):
    pass


class BadStatusError(LlmError):
    def __init__(self, status_code: int, body: str):
        excerpt = body[:200]
        super().__init__(f"HTTP {status_code}: {excerpt}")
        self.status_code = status_code
        self.body_excerpt = excerpt


class EmptyCompletionError(LlmError):
    pass


class NoScriptMatchError(LlmError):
    def __init__(self, digest: str):
        super().__init__(f"no scripted rule matches prompt (digest {digest})")
        self.digest = digest


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message must have non-empty content")


@dataclass
class ChatRequest:
    messages: list[ChatMessage]
    model: str = "default"
    temperature: float = 0.1
    max_tokens: int = 1024

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request must contain at least one message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def rendered(self) -> str:
        """Canonical text form of the conversation, used for rule matching."""
        return "\n\n".join(f"[{m.role}]\n{m.content}" for m in self.messages)


@dataclass
class ChatResponse:
    text: str
    backend_id: str
    latency_ms: float = 0.0


@dataclass
class BackendConfig:
    kind: str = "scripted"  # http | scripted
    base_url: str = ""
    api_key: str | None = None
    max_concurrency: int = 4
    max_attempts: int = 3
    backoff_ms: int = 250
    timeout_ms: int = 30_000
    script_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("http", "scripted"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")

    def to_dict(self) -> dict:
        # api_key deliberately omitted: secrets never enter digests or snapshots
        return {
            "kind": self.kind,
            "base_url": self.base_url,
            "max_concurrency": self.max_concurrency,
            "max_attempts": self.max_attempts,
            "backoff_ms": self.backoff_ms,
            "timeout_ms": self.timeout_ms,
            "script_path": self.script_path,
        }


Matcher = Union[str, Pattern[str], Callable[[ChatRequest], bool]]
Responder = Union[str, Callable[[ChatRequest], str]]


@dataclass
class ScriptRule:
    matches: Matcher
    respond: Responder

    def applies(self, request: ChatRequest) -> bool:
        if isinstance(self.matches, str):
            return self.matches in request.rendered()
        if hasattr(self.matches, "search"):
            return bool(self.matches.search(request.rendered()))
        return bool(self.matches(request))

    def answer(self, request: ChatRequest) -> str:
        if isinstance(self.respond, str):
            return self.respond
        return self.respond(request)


class ScriptedBackend:
    """Deterministic fake: responses are a pure function of the request.

    Rules are tried in order; first match wins. All calls are serialized and
    logged so tests can assert call counts and replay transcripts.
    """

    def __init__(self, rules: list[ScriptRule], backend_id: str = "scripted"):
        if not rules:
            raise ValueError("scripted backend needs at least one rule")
        self.rules = list(rules)
        self.backend_id = backend_id
        self.calls: list[tuple[ChatRequest, str]] = []
        self._lock = threading.Lock()

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def reset(self) -> None:
        with self._lock:
            self.calls.clear()

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            for rule in self.rules:
                if rule.applies(request):
                    text = rule.answer(request)
                    self.calls.append((request, text))
                    return ChatResponse(text=text, backend_id=self.backend_id, latency_ms=0.0)
            digest = hashlib.sha256(request.rendered().encode("utf-8")).hexdigest()[:12]
            raise NoScriptMatchError(digest)


def register_script(rules: list[ScriptRule], backend_id: str = "scripted") -> ScriptedBackend:
    """Build a scripted backend from an ordered rule list."""
    return ScriptedBackend(rules, backend_id=backend_id)


class HttpBackend:
    """OpenAI-style chat-completions client with bounded retries.

    Retries cover transport faults, timeouts, and 5xx responses only; 4xx and
    unparseable bodies surface immediately as typed errors. At most
    `max_concurrency` requests are in flight at once.
    """

    def __init__(self, config: BackendConfig, transport: httpx.BaseTransport | None = None):
        if config.kind != "http":
            raise ValueError("HttpBackend requires a config with kind='http'")
        if not config.base_url:
            raise ValueError("http backend needs a base_url")
        self.config = config
        self.backend_id = config.base_url
        self._semaphore = threading.BoundedSemaphore(config.max_concurrency)
        self._client = httpx.Client(
            timeout=config.timeout_ms / 1000.0,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def _api_key(self) -> str | None:
        return os.environ.get(API_KEY_ENV) or self.config.api_key

    def complete(self, request: ChatRequest) -> ChatResponse:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        payload = {
            "model": request.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        }
        headers = {"Content-Type": "application/json"}
        api_key = self._api_key()
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        attempts = self.config.max_attempts
        last_error: LlmError | None = None
        start = time.monotonic()
        with self._semaphore:
            for attempt in range(1, attempts + 1):
                try:
                    resp = self._client.post(url, json=payload, headers=headers)
                except httpx.TimeoutException as exc:
                    last_error = CompletionTimeoutError(
                        f"request timed out (attempt {attempt} of {attempts})"
                    )
                    last_error.__cause__ = exc
                except httpx.TransportError as exc:
                    last_error = TransportFailureError(f"transport failure: {exc}")
                    last_error.__cause__ = exc
                else:
                    if resp.status_code >= 500:
                        last_error = BadStatusError(resp.status_code, resp.text)
                    elif resp.status_code >= 300:
                        raise BadStatusError(resp.status_code, resp.text)
                    else:
                        text = _extract_completion(resp)
                        latency = (time.monotonic() - start) * 1000.0
                        return ChatResponse(text=text, backend_id=self.backend_id, latency_ms=latency)
                if attempt < attempts:
                    time.sleep(self.config.backoff_ms / 1000.0 * 2 ** (attempt - 1))
        assert last_error is not None
        raise last_error


def _extract_completion(resp: httpx.Response) -> str:
    try:
        body = resp.json()
        text = body["choices"][0]["message"]["content"]
    except (ValueError, LookupError, TypeError) as exc:
        raise EmptyCompletionError(f"response body missing completion text: {exc}") from exc
    if not text:
        raise EmptyCompletionError("backend returned an empty completion")
    return text


def build_backend(config: BackendConfig, transport: httpx.BaseTransport | None = None):
    """Construct a live backend object from declarative config."""
    if config.kind == "http":
        return HttpBackend(config, transport=transport)
    if config.script_path is None:
        raise ValueError("scripted backend config needs script_path")
    from .hermetic import scripted_backend_from_file

    return scripted_backend_from_file(config.script_path)


def complete(backend, request: ChatRequest) -> ChatResponse:
    """Issue one chat completion against a backend object or a BackendConfig."""
    if isinstance(backend, BackendConfig):
        backend = build_backend(backend)
    return backend.complete(request)


def compile_pattern(pattern: str) -> Pattern[str]:
    """Convenience for regex rules in scripted backends."""
    return re.compile(pattern, re.DOTALL)
