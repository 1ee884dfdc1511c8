"""Chat-completion backends.

Two backends share one ``chat(request) -> ChatResponse`` method:

* :class:`HttpBackend` posts to an OpenAI-style ``/chat/completions`` endpoint
  (hosted APIs and local model servers both speak it).
* :class:`ScriptedBackend` replays a fixed queue of replies and never touches
  the network.

:func:`complete` is the entry point the pipeline uses; it enforces the
context-window budget before anything is sent.
"""

from __future__ import annotations

import itertools
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

import httpx

from .domain import ConfigError, LlmProfile

logger = logging.getLogger(__name__)

TokenEstimator = Callable[[str], int]


def bytes_per_four(text: str) -> int:
    return (len(text.encode("utf-8")) + 3) // 4


_estimator: TokenEstimator = bytes_per_four


def estimate_tokens(text: str) -> int:
    """Token estimate used for every budget check (``ceil(utf8 bytes / 4)`` by default)."""
    return _estimator(text)


def set_token_estimator(fn: Optional[TokenEstimator]) -> TokenEstimator:
    """Swap the process-wide estimator; ``None`` restores the default. Returns the previous one."""
    global _estimator
    previous = _estimator
    _estimator = fn or bytes_per_four
    return previous


class LlmError(RuntimeError):
    pass


class ContextOverflow(LlmError):
    def __init__(self, needed: int, limit: int, what: str = "request"):
        super().__init__(f"{what} needs {needed} tokens but the context window is {limit}")
        self.needed = needed
        self.limit = limit


class TransportError(LlmError):
    pass


class ScriptExhausted(LlmError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    user_messages: tuple[str, ...]
    model_id: str
    max_tokens: int
    system_prompt: Optional[str] = None
    temperature: float = 0.2

    def __post_init__(self) -> None:
        object.__setattr__(self, "user_messages", tuple(self.user_messages))
        if not self.user_messages:
            raise ValueError("ChatRequest needs at least one user message")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def text(self) -> str:
        return "".join(([self.system_prompt] if self.system_prompt else []) + list(self.user_messages))

    def messages(self) -> list[dict[str, str]]:
        out = []
        if self.system_prompt:
            out.append({"role": "system", "content": self.system_prompt})
        out.extend({"role": "user", "content": m} for m in self.user_messages)
        return out


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int


_instance_ids = itertools.count()


class ScriptedBackend:
    """Deterministic replay backend for tests and dry runs.

    Each call to :meth:`chat` pops the next reply. Asking past the end raises
    :class:`ScriptExhausted`; replies are never repeated.
    """

    def __init__(self, replies: Iterable[str]):
        self.replies = list(replies)
        self.consumed = 0
        self.requests: list[ChatRequest] = []
        self._lock = threading.Lock()
        self.cache_key = f"scripted#{next(_instance_ids)}"

    def chat(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            if self.consumed >= len(self.replies):
                raise ScriptExhausted(
                    f"scripted backend has no reply left (consumed {self.consumed})"
                )
            text = self.replies[self.consumed]
            self.consumed += 1
            self.requests.append(request)
        return ChatResponse(text, estimate_tokens(request.text()), estimate_tokens(text))

    @property
    def remaining(self) -> int:
        return len(self.replies) - self.consumed


@dataclass
class HttpBackend:
    """Client for a ``POST {base_url}/chat/completions`` endpoint.

    Transport failures and 5xx responses are retried with exponential backoff;
    4xx responses fail immediately. The API key is read from the environment
    variable named by ``api_key_env`` at call time and is never logged.
    """

    base_url: str
    api_key_env: Optional[str] = None
    timeout_s: float = 600.0
    max_retries: int = 3
    backoff_s: float = 1.0
    transport: Optional[httpx.BaseTransport] = field(default=None, repr=False)
    sleep: Callable[[float], None] = field(default=time.sleep, repr=False)

    @property
    def cache_key(self) -> str:
        return self.base_url

    @property
    def url(self) -> str:
        base = self.base_url.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise ConfigError(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def chat(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model_id,
            "messages": request.messages(),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stream": False,
        }
        headers = self._headers()
        last_error: Optional[Exception] = None
        with httpx.Client(timeout=self.timeout_s, transport=self.transport) as client:
            for attempt in range(self.max_retries + 1):
                if attempt:
                    self.sleep(self.backoff_s * 2 ** (attempt - 1))
                try:
                    resp = client.post(self.url, json=payload, headers=headers)
                except httpx.TransportError as exc:
                    last_error = exc
                    logger.warning("chat request to %s failed (%s), attempt %d", self.url, type(exc).__name__, attempt + 1)
                    continue
                if 400 <= resp.status_code < 500:
                    raise TransportError(f"HTTP {resp.status_code} from {self.url}: {resp.text[:500]}")
                if resp.status_code >= 500:
                    last_error = TransportError(f"HTTP {resp.status_code} from {self.url}")
                    logger.warning("chat request to %s returned %d, attempt %d", self.url, resp.status_code, attempt + 1)
                    continue
                return self._parse(resp.json(), request)
        raise TransportError(f"giving up on {self.url} after {self.max_retries + 1} attempts: {last_error}")

    @staticmethod
    def _parse(body: dict[str, Any], request: ChatRequest) -> ChatResponse:
        try:
            text = body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            # Ollama's native /api/chat shape.
            try:
                text = body["message"]["content"] or ""
            except (KeyError, TypeError) as exc:
                raise TransportError(f"unrecognized chat response: {str(body)[:300]}") from exc
        usage = body.get("usage") or {}
        return ChatResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", estimate_tokens(request.text()))),
            completion_tokens=int(usage.get("completion_tokens", estimate_tokens(text))),
        )


def make_backend(profile: LlmProfile, app_name: Optional[str] = None, direction: Optional[str] = None):
    """Build a fresh backend from a profile's ``backend`` descriptor.

    Scripted descriptors pick the first of ``replies_by_task["<app>@<direction>"]``,
    ``replies_by_task["<app>"]`` or ``replies`` that exists.
    """
    desc = dict(profile.backend or {})
    kind = desc.get("kind", "scripted")
    if kind == "scripted":
        by_task = desc.get("replies_by_task") or {}
        for key in (f"{app_name}@{direction}", app_name):
            if key in by_task:
                return ScriptedBackend(by_task[key])
        return ScriptedBackend(desc.get("replies", []))
    if kind == "http":
        if "url" not in desc:
            raise ConfigError(f"llm {profile.name!r}: http backend needs a url")
        return HttpBackend(
            base_url=desc["url"],
            api_key_env=desc.get("api_key_env"),
            timeout_s=float(desc.get("timeout_s", 600.0)),
            max_retries=int(desc.get("max_retries", 3)),
            backoff_s=float(desc.get("backoff_s", 1.0)),
        )
    raise ConfigError(f"llm {profile.name!r}: unknown backend kind {kind!r}")


def build_request(profile: LlmProfile, user_messages: Sequence[str], system_prompt: Optional[str] = None) -> ChatRequest:
    return ChatRequest(
        user_messages=tuple(user_messages),
        model_id=profile.model_id,
        max_tokens=profile.max_response_tokens,
        system_prompt=system_prompt,
        temperature=profile.temperature,
    )


def check_budget(profile: LlmProfile, request: ChatRequest) -> int:
    needed = estimate_tokens(request.text()) + request.max_tokens
    if needed > profile.context_length:
        raise ContextOverflow(needed, profile.context_length)
    return needed


def complete(backend, request: ChatRequest, profile: LlmProfile) -> ChatResponse:
    """Send *request* unless it would overflow *profile*'s context window."""
    check_budget(profile, request)
    return backend.chat(request)
