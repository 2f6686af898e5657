"""Chat-completion backends behind one interface, plus a persistent cache.

Raw completions are stored verbatim under a content-addressed key, so a
warm cache replays byte-identical responses with zero network calls. The
cache file is append-only JSON lines, which keeps it auditable with nothing
more than a pager.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from concurrent.futures import Future
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ._retry import RetryPolicy, call_with_retries
from .errors import ConfigurationError, TransportError


@dataclass(frozen=True)
class ModelSpec:
    """A pinned model: provider, exact version identifier, temperature."""

    provider: str
    version_id: str
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.provider:
            raise ValueError("provider must be non-empty")
        if not self.version_id:
            raise ValueError("version_id must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class CompletionRequest:
    """Everything that determines a completion, and therefore its cache key.

    ``run_index`` distinguishes repeated benchmark runs of an otherwise
    identical request; without it a cache hit would collapse all repeats
    into one sample and stability could not be measured.
    """

    model: ModelSpec
    system_prompt: str
    user_content: str
    schema_id: str
    run_index: int = 0

    def __post_init__(self) -> None:
        if not self.user_content:
            raise ValueError("user_content must be non-empty")


def cache_key(req: CompletionRequest) -> str:
    """Collision-resistant digest of every request field."""
    material = json.dumps(
        [
            req.model.provider,
            req.model.version_id,
            repr(req.model.temperature),
            req.system_prompt,
            req.user_content,
            req.schema_id,
            req.run_index,
        ],
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CacheEntry:
    key: str
    raw_completion: str
    created_at: str


class CompletionCache:
    """Verbatim completion store, optionally persisted as JSON lines.

    With ``path=None`` the cache lives in memory only. On disk, entries are
    appended; when a key appears more than once the last entry wins.
    Reads are lock-free on the underlying dict; writes are serialised.
    """

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path is not None else None
        self._entries: dict[str, str] = {}
        self._write_lock = threading.Lock()
        if self._path is not None and self._path.exists():
            with open(self._path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self._entries[record["key"]] = record["raw_completion"]

    @property
    def path(self) -> Path | None:
        return self._path

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get(self, key: str) -> str | None:
        return self._entries.get(key)

    def put(self, key: str, raw_completion: str) -> CacheEntry:
        entry = CacheEntry(
            key=key,
            raw_completion=raw_completion,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        with self._write_lock:
            self._entries[key] = raw_completion
            if self._path is not None:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps(
                            {
                                "key": entry.key,
                                "raw_completion": entry.raw_completion,
                                "created_at": entry.created_at,
                            },
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
        return entry


class ChatBackend:
    """Interface for chat-completion providers.

    ``generate`` returns the raw completion text; transport problems must be
    raised as :class:`TransportError` so the retry loop can see them.
    """

    provider: str = "abstract"

    def generate(self, req: CompletionRequest) -> str:  # pragma: no cover - interface
        raise NotImplementedError


class MockChatBackend(ChatBackend):
    """Scripted offline backend for tests and dry runs.

    ``responder`` maps a request to completion text; a plain string means
    "always answer this". ``failures_before_success`` injects that many
    transport failures ahead of the first successful call.
    """

    provider = "mock"

    def __init__(
        self,
        responder: str | Callable[[CompletionRequest], str],
        failures_before_success: int = 0,
    ):
        self._responder = responder
        self._failures_left = failures_before_success
        self.invocations: list[CompletionRequest] = []

    def generate(self, req: CompletionRequest) -> str:
        self.invocations.append(req)
        if self._failures_left > 0:
            self._failures_left -= 1
            raise TransportError("scripted transport failure")
        if callable(self._responder):
            return self._responder(req)
        return self._responder


class OpenAIChatBackend(ChatBackend):
    """OpenAI-compatible ``/chat/completions`` backend.

    Asks the endpoint for a JSON object response; schema validation stays
    in this package, provider-side enforcement is treated as best-effort.
    """

    def __init__(
        self,
        provider: str = "openai",
        base_url: str = "https://api.openai.com/v1",
        timeout: float = 120.0,
        transport=None,
    ):
        import httpx

        self.provider = provider
        env = f"{provider.upper()}_API_KEY"
        api_key = os.environ.get(env)
        if not api_key:
            raise ConfigurationError(f"environment variable {env} is not set")
        self._client = httpx.Client(
            base_url=base_url,
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout,
            transport=transport,
        )

    def generate(self, req: CompletionRequest) -> str:
        import httpx

        payload = {
            "model": req.model.version_id,
            "temperature": req.model.temperature,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_content},
            ],
            "response_format": {"type": "json_object"},
        }
        try:
            response = self._client.post("/chat/completions", json=payload)
            response.raise_for_status()
        except httpx.HTTPError as err:
            raise TransportError(f"chat request failed: {err}") from err
        return response.json()["choices"][0]["message"]["content"]


class AnthropicChatBackend(ChatBackend):
    """Anthropic ``/v1/messages`` backend."""

    provider = "anthropic"

    def __init__(
        self,
        base_url: str = "https://api.anthropic.com",
        timeout: float = 120.0,
        max_tokens: int = 4096,
        transport=None,
    ):
        import httpx

        api_key = os.environ.get("ANTHROPIC_API_KEY")
        if not api_key:
            raise ConfigurationError("environment variable ANTHROPIC_API_KEY is not set")
        self._max_tokens = max_tokens
        self._client = httpx.Client(
            base_url=base_url,
            headers={"x-api-key": api_key, "anthropic-version": "2023-06-01"},
            timeout=timeout,
            transport=transport,
        )

    def generate(self, req: CompletionRequest) -> str:
        import httpx

        payload = {
            "model": req.model.version_id,
            "temperature": req.model.temperature,
            "max_tokens": self._max_tokens,
            "system": req.system_prompt,
            "messages": [{"role": "user", "content": req.user_content}],
        }
        try:
            response = self._client.post("/v1/messages", json=payload)
            response.raise_for_status()
        except httpx.HTTPError as err:
            raise TransportError(f"chat request failed: {err}") from err
        return response.json()["content"][0]["text"]


@dataclass
class CompletionClient:
    """Cache-first completion calls with retries and in-flight coalescing.

    Concurrent calls for the same key share one backend invocation: the
    first caller registers a future, later callers wait on it.
    """

    cache: CompletionCache
    backends: Mapping[str, ChatBackend]
    policy: RetryPolicy = RetryPolicy()
    _inflight: dict[str, Future] = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def complete(self, req: CompletionRequest) -> tuple[str, bool]:
        """Return ``(raw_completion, cache_hit)`` for a request."""
        key = cache_key(req)
        cached = self.cache.get(key)
        if cached is not None:
            return cached, True
        if req.model.provider not in self.backends:
            raise ConfigurationError(f"no backend registered for provider {req.model.provider!r}")
        backend = self.backends[req.model.provider]

        with self._lock:
            # Re-check under the lock: another thread may have finished.
            cached = self.cache.get(key)
            if cached is not None:
                return cached, True
            pending = self._inflight.get(key)
            if pending is None:
                future: Future = Future()
                self._inflight[key] = future
                owner = True
            else:
                future = pending
                owner = False

        if not owner:
            return future.result(), False

        try:
            raw = call_with_retries(lambda: backend.generate(req), self.policy)
            self.cache.put(key, raw)
            future.set_result(raw)
        except BaseException as err:
            future.set_exception(err)
            raise
        finally:
            with self._lock:
                self._inflight.pop(key, None)
        return raw, False


def complete(
    req: CompletionRequest,
    cache: CompletionCache,
    backends: Mapping[str, ChatBackend],
    policy: RetryPolicy = RetryPolicy(),
) -> tuple[str, bool]:
    """One-shot completion call.

    Build a shared :class:`CompletionClient` instead when issuing concurrent
    requests, so duplicate in-flight keys coalesce.
    """
    return CompletionClient(cache=cache, backends=backends, policy=policy).complete(req)


def build_backends(
    providers: Sequence[str],
    mock_factory: Callable[[], ChatBackend] | None = None,
) -> dict[str, ChatBackend]:
    """Instantiate one backend per provider name.

    Known remote providers are ``openai`` and ``anthropic``; ``mock`` uses
    ``mock_factory``. Anything else is a configuration error.
    """
    backends: dict[str, ChatBackend] = {}
    for provider in providers:
        if provider in backends:
            continue
        if provider == "openai":
            backends[provider] = OpenAIChatBackend()
        elif provider == "anthropic":
            backends[provider] = AnthropicChatBackend()
        elif provider == "mock":
            if mock_factory is None:
                raise ConfigurationError("mock provider requested but no mock factory supplied")
            backends[provider] = mock_factory()
        else:
            raise ConfigurationError(f"unknown provider {provider!r}")
    return backends
