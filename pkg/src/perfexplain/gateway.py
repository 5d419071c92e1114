"""Uniform chat-completion access with deterministic record/replay.

A provider is anything with ``complete(ChatRequest) -> ChatResponse``. The
HTTP provider targets OpenAI-compatible chat endpoints; scripted and function
providers back tests; recording/replay providers wrap any provider with a
cassette so full pipeline runs are reproducible offline, bit for bit.

Request hashing covers system prompt, messages, and temperature only (token
caps are an operational knob, not semantic input), over a canonical JSON
serialization so hashes are stable across processes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .errors import CassetteMiss, ContextOverflow, RateLimited, Refusal, ScriptExhausted, Transport

logger = logging.getLogger(__name__)

REASONING_EFFORTS = ("low", "medium", "high")


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "user" | "assistant"
    content: str


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    messages: tuple[ChatMessage, ...]
    temperature: float | None = None  # None: provider default
    reasoning_effort: str = "high"
    max_output_tokens: int = 8192

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role != "user":
            raise ValueError("first message role must be user")
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.reasoning_effort not in REASONING_EFFORTS:
            raise ValueError(f"reasoning_effort must be one of {REASONING_EFFORTS}")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    token_usage: dict[str, int] = field(default_factory=lambda: {"prompt": 0, "completion": 0})
    provider_tag: str = ""
    refusal: bool = False

    def __post_init__(self):
        if not self.content and not self.refusal:
            raise ValueError("empty content requires the refusal flag")


def request_hash(request: ChatRequest) -> str:
    """Stable content hash of the semantic request fields."""
    canonical = json.dumps(
        {
            "system_prompt": request.system_prompt,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def estimate_tokens(request: ChatRequest) -> int:
    chars = len(request.system_prompt) + sum(len(m.content) for m in request.messages)
    return (chars + 3) // 4


class Provider(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def single_turn(system_prompt: str, user_content: str, **kwargs) -> ChatRequest:
    return ChatRequest(system_prompt=system_prompt, messages=(ChatMessage("user", user_content),), **kwargs)


@dataclass(frozen=True)
class HttpProviderConfig:
    endpoint: str
    model: str
    credential_env: str = "PERFEXPLAIN_API_KEY"  # credential only ever read from env
    context_limit: int | None = None
    max_retries: int = 3
    backoff_base: float = 0.5
    timeout: float = 120.0
    default_temperature: float | None = None


class HttpProvider:
    """OpenAI-compatible chat completions client.

    Transient transport failures (429, 5xx, connection errors) are retried
    with exponential backoff up to the configured cap. A request whose
    estimated prompt tokens exceed the configured context limit fails with
    ContextOverflow before any network call.
    """

    def __init__(self, config: HttpProviderConfig, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._sleep = sleep

    def complete(self, request: ChatRequest) -> ChatResponse:
        if self.config.context_limit is not None:
            estimate = estimate_tokens(request)
            if estimate > self.config.context_limit:
                raise ContextOverflow(estimate, self.config.context_limit)

        import requests  # deferred: offline use of the package never needs it

        headers = {"Content-Type": "application/json"}
        credential = os.environ.get(self.config.credential_env)
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        payload: dict = {
            "model": self.config.model,
            "messages": [{"role": "system", "content": request.system_prompt}]
            + [{"role": m.role, "content": m.content} for m in request.messages],
            "max_tokens": request.max_output_tokens,
            "reasoning_effort": request.reasoning_effort,
        }
        temperature = request.temperature
        if temperature is None:
            temperature = self.config.default_temperature
        if temperature is not None:
            payload["temperature"] = temperature

        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                resp = requests.post(
                    self.config.endpoint, json=payload, headers=headers, timeout=self.config.timeout
                )
            except requests.RequestException as exc:
                last_error = Transport(0, str(exc))
            else:
                if resp.status_code == 429:
                    retry_after = resp.headers.get("Retry-After")
                    last_error = RateLimited(float(retry_after) if retry_after else None)
                elif resp.status_code >= 500:
                    last_error = Transport(resp.status_code, resp.text[:200])
                elif resp.status_code >= 400:
                    raise Transport(resp.status_code, resp.text[:500])
                else:
                    return self._parse_response(resp.json())
            if attempt < self.config.max_retries:
                delay = self.config.backoff_base * (2**attempt)
                if isinstance(last_error, RateLimited) and last_error.retry_after:
                    delay = max(delay, last_error.retry_after)
                logger.warning("transient gateway failure (%s); retrying in %.1fs", last_error, delay)
                self._sleep(delay)
        assert last_error is not None
        raise last_error

    def _parse_response(self, data: dict) -> ChatResponse:
        try:
            choice = data["choices"][0]
            content = choice["message"].get("content") or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise Transport(0, f"malformed completion payload: {exc}") from exc
        usage = data.get("usage", {})
        if not content:
            raise Refusal(f"empty completion (finish_reason={choice.get('finish_reason')!r})")
        return ChatResponse(
            content=content,
            token_usage={
                "prompt": int(usage.get("prompt_tokens", 0)),
                "completion": int(usage.get("completion_tokens", 0)),
            },
            provider_tag=f"http:{self.config.model}",
        )


class ScriptedProvider:
    """Returns a fixed sequence of responses; raises ScriptExhausted past the end."""

    def __init__(self, responses: list[str], provider_tag: str = "scripted"):
        self._responses = list(responses)
        self._tag = provider_tag
        self._calls = 0
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
            if self._calls >= len(self._responses):
                raise ScriptExhausted(self._calls)
            content = self._responses[self._calls]
            self._calls += 1
        return ChatResponse(content=content, provider_tag=self._tag, refusal=not content)

    @property
    def calls_made(self) -> int:
        return self._calls


class FunctionProvider:
    """Computes each response from the request; handy for adversarial mocks."""

    def __init__(self, fn: Callable[[ChatRequest], str], provider_tag: str = "function"):
        self._fn = fn
        self._tag = provider_tag
        self._lock = threading.Lock()
        self.calls_made = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls_made += 1
        content = self._fn(request)
        return ChatResponse(content=content, provider_tag=self._tag, refusal=not content)


@dataclass
class Cassette:
    """Ordered store of (request hash -> response), serializable to JSON.

    Requests are stored redacted (semantic fields only; credentials never
    enter a ChatRequest in the first place).
    """

    entries: list[dict] = field(default_factory=list)

    def lookup(self, digest: str) -> dict | None:
        for entry in self.entries:
            if entry["request_hash"] == digest:
                return entry
        return None

    def append(self, request: ChatRequest, response: ChatResponse) -> None:
        digest = request_hash(request)
        if self.lookup(digest) is not None:
            return
        self.entries.append(
            {
                "request_hash": digest,
                "request": {
                    "system_prompt": request.system_prompt,
                    "messages": [{"role": m.role, "content": m.content} for m in request.messages],
                    "temperature": request.temperature,
                },
                "response": {
                    "content": response.content,
                    "token_usage": dict(response.token_usage),
                    "provider_tag": response.provider_tag,
                    "refusal": response.refusal,
                },
            }
        )

    @classmethod
    def load(cls, path: str | Path) -> "Cassette":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise ValueError("cassette file must be a JSON list")
        return cls(entries=data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.entries, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )


class RecordingProvider:
    """Pass-through wrapper that appends every exchange to a cassette."""

    def __init__(self, inner: Provider, cassette: Cassette):
        self.inner = inner
        self.cassette = cassette
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.complete(request)
        with self._lock:
            self.cassette.append(request, response)
        return response


class ReplayProvider:
    """Pure cassette lookup; byte-identical responses, no network."""

    def __init__(self, cassette: Cassette):
        self.cassette = cassette

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request_hash(request)
        entry = self.cassette.lookup(digest)
        if entry is None:
            raise CassetteMiss(digest)
        stored = entry["response"]
        return ChatResponse(
            content=stored["content"],
            token_usage=dict(stored.get("token_usage", {"prompt": 0, "completion": 0})),
            provider_tag=stored.get("provider_tag", "replay"),
            refusal=bool(stored.get("refusal", False)),
        )
