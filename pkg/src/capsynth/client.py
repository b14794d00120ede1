"""Chat-completion transport: retries, concurrency caps, usage and cost capture.

Speaks the OpenAI-compatible chat-completions dialect over HTTP, or a
deterministic fixture-driven mock backend for offline runs and tests.
"""

from __future__ import annotations

import json
import math
import random
import threading
import time
from collections import deque
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping

import requests

from .agents import RenderedRequest

TOKENS_PER_PRICE_UNIT = 1_000_000
BACKOFF_BASE_SECONDS = 1.0


def _to_decimal(value: Any) -> Decimal:
    if isinstance(value, Decimal):
        return value
    return Decimal(str(value))


@dataclass(frozen=True)
class ModelProfile:
    """One endpoint a registry binding can point at, with pricing and limits."""

    name: str
    endpoint: str
    model_id: str
    price_in: Decimal = Decimal("0")
    price_out: Decimal = Decimal("0")
    max_concurrency: int = 4
    timeout: float = 120.0
    max_retries: int = 3
    api_key: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "price_in", _to_decimal(self.price_in))
        object.__setattr__(self, "price_out", _to_decimal(self.price_out))
        if self.price_in < 0 or self.price_out < 0:
            raise ValueError(f"profile {self.name}: prices must be non-negative")
        if self.max_concurrency < 1:
            raise ValueError(f"profile {self.name}: max_concurrency must be >= 1")
        if self.max_retries < 0:
            raise ValueError(f"profile {self.name}: max_retries must be non-negative")


@dataclass(frozen=True)
class Usage:
    """Token counts for one call; estimated marks counts derived from text length."""

    input_tokens: int
    output_tokens: int
    estimated: bool = False

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")


def cost_of(usage: Usage, profile: ModelProfile) -> Decimal:
    """Exact decimal cost: tokens times per-million-token prices.

    Pure decimal arithmetic, no rounding; the result is exact to the last
    digit and additive across any number of calls.
    """
    unit = Decimal(TOKENS_PER_PRICE_UNIT)
    return (
        Decimal(usage.input_tokens) * profile.price_in
        + Decimal(usage.output_tokens) * profile.price_out
    ) / unit


def estimate_tokens(chars: int) -> int:
    """Fallback token estimate when the server reports no usage: ceil(chars/4)."""
    return math.ceil(chars / 4)


def fmt_cost(value: Decimal) -> str:
    """Fixed-point string form of an exact cost (never scientific notation)."""
    return format(value, "f")


class CallStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


@dataclass(frozen=True)
class AgentOutput:
    """One agent call's text plus accounting."""

    agent: str
    text: str
    usage: Usage
    cost: Decimal
    status: CallStatus
    error: str | None = None
    attempts: int = 1
    latency: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "agent": self.agent,
            "text": self.text,
            "usage": {
                "input_tokens": self.usage.input_tokens,
                "output_tokens": self.usage.output_tokens,
                "estimated": self.usage.estimated,
            },
            "cost": fmt_cost(self.cost),
            "status": self.status.value,
            "error": self.error,
            "attempts": self.attempts,
            "latency": self.latency,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AgentOutput":
        usage = d.get("usage", {})
        return cls(
            agent=d["agent"],
            text=d["text"],
            usage=Usage(
                input_tokens=int(usage.get("input_tokens", 0)),
                output_tokens=int(usage.get("output_tokens", 0)),
                estimated=bool(usage.get("estimated", False)),
            ),
            cost=Decimal(d.get("cost", "0")),
            status=CallStatus(d.get("status", "ok")),
            error=d.get("error"),
            attempts=int(d.get("attempts", 1)),
            latency=float(d.get("latency", 0.0)),
        )


class TransportFailure(Exception):
    """A single call attempt failed; retryable marks transient classes."""

    def __init__(self, reason: str, retryable: bool):
        super().__init__(reason)
        self.reason = reason
        self.retryable = retryable


@dataclass(frozen=True)
class BackendResult:
    text: str
    input_tokens: int | None = None
    output_tokens: int | None = None
    latency: float = 0.0


def to_chat_payload(request: RenderedRequest, profile: ModelProfile) -> dict[str, Any]:
    """Serialize a rendered request to chat-completions JSON."""
    messages: list[dict[str, Any]] = []
    for msg in request.messages:
        if not msg.media:
            messages.append({"role": msg.role.value, "content": msg.text})
            continue
        parts: list[dict[str, Any]] = []
        for ref in msg.media:
            url = ref.uri if ref.timestamp is None else f"{ref.uri}#t={ref.timestamp}"
            parts.append({"type": "image_url", "image_url": {"url": url}})
        if msg.text:
            parts.append({"type": "text", "text": msg.text})
        messages.append({"role": msg.role.value, "content": parts})
    return {
        "model": profile.model_id,
        "messages": messages,
        "max_tokens": request.max_output_tokens,
    }


class HttpBackend:
    """POSTs chat-completions JSON to the profile endpoint."""

    def __init__(self, session: requests.Session | None = None):
        self._session = session or requests.Session()

    def send(self, request: RenderedRequest, profile: ModelProfile) -> BackendResult:
        headers = {"Content-Type": "application/json"}
        if profile.api_key:
            headers["Authorization"] = f"Bearer {profile.api_key}"
        payload = to_chat_payload(request, profile)
        started = time.monotonic()
        try:
            resp = self._session.post(
                profile.endpoint, json=payload, headers=headers, timeout=profile.timeout
            )
        except requests.Timeout:
            raise TransportFailure("timeout", retryable=True) from None
        except requests.RequestException as exc:
            raise TransportFailure(f"network error: {exc}", retryable=True) from None
        latency = time.monotonic() - started
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportFailure(f"HTTP {resp.status_code}", retryable=True)
        if resp.status_code >= 400:
            raise TransportFailure(f"HTTP {resp.status_code}", retryable=False)
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportFailure(f"malformed response: {exc}", retryable=False) from None
        usage = body.get("usage") or {}
        return BackendResult(
            text=text,
            input_tokens=usage.get("prompt_tokens"),
            output_tokens=usage.get("completion_tokens"),
            latency=latency,
        )


@dataclass
class MockEntry:
    """Canned reply for one (agent, item) pair.

    faults are consumed one per call before the reply is served: an int is
    treated as an HTTP status, the strings "timeout" and "network" as
    transport errors. hold is a real sleep used to exercise concurrency
    limits; latency is only the value reported back.
    """

    text: str = ""
    input_tokens: int | None = None
    output_tokens: int | None = None
    faults: tuple[Any, ...] = ()
    latency: float = 0.0
    hold: float = 0.0

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MockEntry":
        return cls(
            text=d.get("text", ""),
            input_tokens=d.get("input_tokens"),
            output_tokens=d.get("output_tokens"),
            faults=tuple(d.get("faults", ())),
            latency=float(d.get("latency", 0.0)),
            hold=float(d.get("hold", 0.0)),
        )


class MockBackend:
    """Deterministic in-process backend keyed by (agent name, item id).

    Tracks per-key call counts and the per-profile high-water mark of
    concurrent in-flight sends, so tests can assert both resume idempotence
    and concurrency caps.
    """

    def __init__(
        self,
        entries: Mapping[tuple[str, str], MockEntry] | None = None,
        default: MockEntry | None = None,
    ):
        self._entries = dict(entries or {})
        self._default = default
        self._faults: dict[tuple[str, str], deque[Any]] = {
            key: deque(entry.faults) for key, entry in self._entries.items()
        }
        self._lock = threading.Lock()
        self.calls: dict[tuple[str, str], int] = {}
        self._inflight: dict[str, int] = {}
        self.max_inflight: dict[str, int] = {}

    @classmethod
    def from_fixture(cls, path: str | Path) -> "MockBackend":
        data = json.loads(Path(path).read_text("utf-8"))
        entries = {
            (row["agent"], row["item_id"]): MockEntry.from_dict(row)
            for row in data.get("entries", ())
        }
        default = MockEntry.from_dict(data["default"]) if "default" in data else None
        return cls(entries, default)

    def call_count(self, agent: str, item_id: str) -> int:
        return self.calls.get((agent, item_id), 0)

    def send(self, request: RenderedRequest, profile: ModelProfile) -> BackendResult:
        key = (request.agent, request.item_id)
        with self._lock:
            self.calls[key] = self.calls.get(key, 0) + 1
            self._inflight[profile.name] = self._inflight.get(profile.name, 0) + 1
            self.max_inflight[profile.name] = max(
                self.max_inflight.get(profile.name, 0), self._inflight[profile.name]
            )
            entry = self._entries.get(key, self._default)
            fault = None
            if entry is not None and key in self._faults and self._faults[key]:
                fault = self._faults[key].popleft()
        try:
            if entry is None:
                raise TransportFailure(
                    f"no mock entry for agent={key[0]!r} item={key[1]!r}", retryable=False
                )
            if entry.hold:
                time.sleep(entry.hold)
            if fault is not None:
                if fault in ("timeout", "network"):
                    raise TransportFailure(str(fault), retryable=True)
                code = int(fault)
                retryable = code == 429 or code >= 500
                raise TransportFailure(f"HTTP {code}", retryable=retryable)
            return BackendResult(
                text=entry.text,
                input_tokens=entry.input_tokens,
                output_tokens=entry.output_tokens,
                latency=entry.latency,
            )
        finally:
            with self._lock:
                self._inflight[profile.name] -= 1


class ChatClient:
    """Shared, thread-safe front door for all model calls.

    Enforces per-profile concurrency caps with semaphores and retries
    transient failures with exponential backoff (base 1 s, factor 2, full
    jitter). Pass sleep=None to disable backoff sleeps (mock runs, tests).
    """

    def __init__(
        self,
        backend: Any,
        profiles: Mapping[str, ModelProfile],
        sleep: Callable[[float], None] | None = time.sleep,
        rng: random.Random | None = None,
    ):
        self.backend = backend
        self.profiles = dict(profiles)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._semaphores: dict[str, threading.Semaphore] = {}
        self._lock = threading.Lock()

    def profile_for(self, binding: str) -> ModelProfile:
        try:
            return self.profiles[binding]
        except KeyError:
            raise KeyError(f"no model profile configured for binding {binding!r}") from None

    def _semaphore(self, profile: ModelProfile) -> threading.Semaphore:
        with self._lock:
            sem = self._semaphores.get(profile.name)
            if sem is None:
                sem = threading.Semaphore(profile.max_concurrency)
                self._semaphores[profile.name] = sem
            return sem

    def chat(self, request: RenderedRequest, profile: ModelProfile | None = None) -> AgentOutput:
        """Run one request to completion, returning Ok or Failed output."""
        profile = profile or self.profile_for(request.model_binding)
        sem = self._semaphore(profile)
        attempts = 0
        last_reason = "unknown"
        while attempts <= profile.max_retries:
            attempts += 1
            try:
                with sem:
                    result = self.backend.send(request, profile)
            except TransportFailure as failure:
                last_reason = failure.reason
                if not failure.retryable or attempts > profile.max_retries:
                    break
                if self._sleep is not None:
                    self._sleep(self._rng.uniform(0.0, BACKOFF_BASE_SECONDS * 2 ** (attempts - 1)))
                continue
            if not result.text:
                last_reason = "empty response"
                break
            if result.input_tokens is None or result.output_tokens is None:
                usage = Usage(
                    input_tokens=estimate_tokens(request.text_chars),
                    output_tokens=estimate_tokens(len(result.text)),
                    estimated=True,
                )
            else:
                usage = Usage(int(result.input_tokens), int(result.output_tokens))
            return AgentOutput(
                agent=request.agent,
                text=result.text,
                usage=usage,
                cost=cost_of(usage, profile),
                status=CallStatus.OK,
                attempts=attempts,
                latency=result.latency,
            )
        return AgentOutput(
            agent=request.agent,
            text="",
            usage=Usage(0, 0),
            cost=Decimal("0"),
            status=CallStatus.FAILED,
            error=last_reason,
            attempts=attempts,
            latency=0.0,
        )
