"""Chat-completion and embedding access: wire adapters, a scripted deterministic
provider for offline runs, usage accounting, and the cost model.

Token counts always come from the provider response; nothing is re-tokenized
locally.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol, Sequence

import httpx

from .domain import Pricing, TokenUsage, ToolCallRequest, TranscriptMessage, UsageLedger
from .tools.base import ToolSpec


class GatewayError(RuntimeError):
    """Base class for provider failures surfaced to the agent loop."""


class ProviderUnreachable(GatewayError):
    pass


class ContextLengthExceeded(GatewayError):
    pass


class MalformedProviderResponse(GatewayError):
    pass


class ScriptExhausted(AssertionError):
    """The scripted provider received more requests than its script covers."""


class ScriptMismatch(AssertionError):
    """A scripted expectation about the request shape failed."""


FREE_TEXT = "free_text"
STRUCTURED = "structured"


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[TranscriptMessage, ...]
    temperature: float = 0.0
    tool_schemas: tuple[ToolSpec, ...] = ()
    response_mode: str = FREE_TEXT

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("completion request needs at least one message")
        if self.response_mode not in (FREE_TEXT, STRUCTURED):
            raise ValueError(f"unknown response mode: {self.response_mode!r}")

    def rendered(self) -> str:
        """Flat text view of the request, used by scripted-provider matching."""
        return "\n".join(f"[{m.role}] {m.content}" for m in self.messages)


@dataclass(frozen=True)
class CompletionResult:
    content: str
    tool_call: ToolCallRequest | None = None
    usage: TokenUsage = TokenUsage()


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("embedding vector must be non-empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding vector must contain only finite values")

    @property
    def dimension(self) -> int:
        return len(self.values)


class ChatProvider(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResult: ...


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> tuple[list[EmbeddingVector], TokenUsage]: ...


# --- cost model -------------------------------------------------------------


def round_tokens_to_thousands(tokens: int) -> int:
    """Round a raw token count to the nearest thousand (half up)."""
    if tokens < 0:
        raise ValueError("token count must be non-negative")
    return (tokens + 500) // 1000 * 1000


def cost_of(usage: TokenUsage, pricing: Pricing) -> int:
    """Cost in integer micro-dollars: token counts rounded to thousands first,
    then priced per 1K."""
    input_k = round_tokens_to_thousands(usage.input_tokens) // 1000
    output_k = round_tokens_to_thousands(usage.output_tokens) // 1000
    return input_k * pricing.input_per_1k + output_k * pricing.output_per_1k


def estimate_query_capacity(tokens_per_minute: int, context_length: int) -> float:
    """Upper bound on full-context queries per hour under a token rate limit."""
    if tokens_per_minute <= 0 or context_length <= 0:
        raise ValueError("rates must be positive")
    return (tokens_per_minute / context_length) * 60


# --- gateway ----------------------------------------------------------------


class LlmGateway:
    """Front door for all model calls in a run: forwards to the configured
    providers and records usage in the run's ledger."""

    def __init__(
        self,
        chat: ChatProvider | None,
        embeddings: EmbeddingProvider | None = None,
        ledger: UsageLedger | None = None,
        on_completion_usage: Callable[[TokenUsage], None] | None = None,
    ) -> None:
        self.chat = chat
        self.embeddings = embeddings
        self.ledger = ledger if ledger is not None else UsageLedger()
        self._on_completion_usage = on_completion_usage

    def complete(self, request: CompletionRequest) -> CompletionResult:
        if self.chat is None:
            raise ProviderUnreachable("no chat provider configured")
        result = self.chat.complete(request)
        self.ledger.record_completion(result.usage)
        if self._on_completion_usage is not None:
            self._on_completion_usage(result.usage)
        return result

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValueError("embed() needs at least one text")
        if self.embeddings is None:
            raise ProviderUnreachable("no embedding provider configured")
        vectors, usage = self.embeddings.embed(texts)
        if len(vectors) != len(texts):
            raise MalformedProviderResponse(
                f"expected {len(texts)} embeddings, got {len(vectors)}"
            )
        dimensions = {v.dimension for v in vectors}
        if len(dimensions) > 1:
            raise MalformedProviderResponse(f"inconsistent embedding dimensions: {dimensions}")
        self.ledger.record_embedding(usage)
        return vectors


# --- HTTP providers (de-facto chat-completions wire schema) ------------------

_WIRE_ROLES = {"system": "system", "user": "user", "agent": "assistant", "tool": "tool"}


def _wire_messages(messages: Iterable[TranscriptMessage]) -> list[dict[str, Any]]:
    out: list[dict[str, Any]] = []
    for m in messages:
        entry: dict[str, Any] = {"role": _WIRE_ROLES[m.role], "content": m.content}
        if m.tool_call is not None:
            entry["tool_calls"] = [
                {
                    "id": m.tool_call.id,
                    "type": "function",
                    "function": {
                        "name": m.tool_call.name,
                        "arguments": json.dumps(dict(m.tool_call.arguments)),
                    },
                }
            ]
        if m.tool_call_id is not None:
            entry["tool_call_id"] = m.tool_call_id
        out.append(entry)
    return out


class HttpChatProvider:
    """Client for a chat-completions endpoint (messages array in, choices out)."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        model: str = "gpt-4o",
        client: httpx.Client | None = None,
        timeout: float = 120.0,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client if client is not None else httpx.Client(timeout=timeout)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": _wire_messages(request.messages),
            "temperature": request.temperature,
        }
        if request.tool_schemas:
            body["tools"] = [
                {
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.json_schema(),
                    },
                }
                for t in request.tool_schemas
            ]
        if request.response_mode == STRUCTURED:
            body["response_format"] = {"type": "json_object"}
        try:
            response = self._client.post(
                f"{self.base_url}/chat/completions", json=body, headers=self._headers
            )
        except httpx.HTTPError as exc:
            raise ProviderUnreachable(str(exc)) from exc
        if response.status_code == 400 and "context_length" in response.text:
            raise ContextLengthExceeded(response.text[:500])
        if response.status_code >= 400:
            raise ProviderUnreachable(f"provider returned {response.status_code}")
        try:
            payload = response.json()
            message = payload["choices"][0]["message"]
            usage = TokenUsage(
                payload["usage"]["prompt_tokens"], payload["usage"]["completion_tokens"]
            )
            tool_call = None
            calls = message.get("tool_calls") or []
            if calls:
                fn = calls[0]["function"]
                tool_call = ToolCallRequest(
                    id=calls[0].get("id", "call-0"),
                    name=fn["name"],
                    arguments=json.loads(fn.get("arguments") or "{}"),
                )
            return CompletionResult(
                content=message.get("content") or "", tool_call=tool_call, usage=usage
            )
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise MalformedProviderResponse(str(exc)) from exc


class HttpEmbeddingProvider:
    """Client for an embeddings endpoint (input list in, data vectors out)."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        model: str = "text-embedding-ada-002",
        client: httpx.Client | None = None,
        timeout: float = 60.0,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client if client is not None else httpx.Client(timeout=timeout)

    def embed(self, texts: Sequence[str]) -> tuple[list[EmbeddingVector], TokenUsage]:
        try:
            response = self._client.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": list(texts)},
                headers=self._headers,
            )
        except httpx.HTTPError as exc:
            raise ProviderUnreachable(str(exc)) from exc
        if response.status_code >= 400:
            raise ProviderUnreachable(f"provider returned {response.status_code}")
        try:
            payload = response.json()
            vectors = [
                EmbeddingVector(tuple(float(x) for x in item["embedding"]))
                for item in payload["data"]
            ]
            usage_body = payload.get("usage") or {}
            usage = TokenUsage(usage_body.get("prompt_tokens", 0), 0)
            return vectors, usage
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedProviderResponse(str(exc)) from exc


# --- scripted providers -------------------------------------------------------

_SCRIPT_ERRORS = {
    "unreachable": ProviderUnreachable,
    "context_length": ContextLengthExceeded,
    "malformed": MalformedProviderResponse,
}


@dataclass
class ScriptedReply:
    """One playback step. `match` selects which requests the step serves,
    `expect` asserts the request shape, `times` is the number of uses
    (None = unlimited)."""

    content: str = ""
    tool: str | None = None
    args: dict[str, Any] = field(default_factory=dict)
    usage: TokenUsage = TokenUsage()
    match: str | None = None
    expect: str | None = None
    times: int | None = 1
    error: str | None = None


class ScriptedChatProvider:
    """Deterministic provider playing back canned completions; the reference
    provider for CI and replay runs."""

    def __init__(self, replies: Iterable[ScriptedReply]) -> None:
        self._steps = [(reply, reply.times) for reply in replies]
        self._remaining: list[int | None] = [times for _, times in self._steps]
        self._call_counter = 0
        self.requests: list[CompletionRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedChatProvider":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        replies = []
        for step in raw["steps"]:
            usage = step.get("usage") or {}
            replies.append(
                ScriptedReply(
                    content=step.get("content", ""),
                    tool=step.get("tool"),
                    args=step.get("args", {}),
                    usage=TokenUsage(usage.get("input", 0), usage.get("output", 0)),
                    match=step.get("match"),
                    expect=step.get("expect"),
                    times=step.get("times", 1),
                    error=step.get("error"),
                )
            )
        return cls(replies)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        self.requests.append(request)
        text = request.rendered()
        for index, (reply, _) in enumerate(self._steps):
            remaining = self._remaining[index]
            if remaining is not None and remaining <= 0:
                continue
            if reply.match is not None and reply.match not in text:
                continue
            if remaining is not None:
                self._remaining[index] = remaining - 1
            if reply.expect is not None and reply.expect not in text:
                raise ScriptMismatch(
                    f"step {index}: expected {reply.expect!r} in request, got:\n{text[:2000]}"
                )
            if reply.error is not None:
                raise _SCRIPT_ERRORS[reply.error](f"scripted {reply.error}")
            tool_call = None
            if reply.tool is not None:
                self._call_counter += 1
                tool_call = ToolCallRequest(
                    id=f"call-{self._call_counter}", name=reply.tool, arguments=dict(reply.args)
                )
            return CompletionResult(content=reply.content, tool_call=tool_call, usage=reply.usage)
        raise ScriptExhausted(f"no scripted reply for request:\n{text[:2000]}")


class ScriptedEmbeddingProvider:
    """Returns fixed vectors per text, with an optional fallback function."""

    def __init__(
        self,
        mapping: dict[str, Sequence[float]] | None = None,
        fallback: Callable[[str], Sequence[float]] | None = None,
    ) -> None:
        self._mapping = dict(mapping or {})
        self._fallback = fallback

    def embed(self, texts: Sequence[str]) -> tuple[list[EmbeddingVector], TokenUsage]:
        vectors = []
        for text in texts:
            if text in self._mapping:
                values = self._mapping[text]
            elif self._fallback is not None:
                values = self._fallback(text)
            else:
                raise ScriptExhausted(f"no scripted embedding for {text!r}")
            vectors.append(EmbeddingVector(tuple(float(x) for x in values)))
        return vectors, TokenUsage()


class HashEmbeddingProvider:
    """Deterministic offline embeddings derived from a content digest. Identical
    inputs always map to identical vectors, across processes and platforms."""

    def __init__(self, dimension: int = 32) -> None:
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension

    def _vector(self, text: str) -> tuple[float, ...]:
        values: list[float] = []
        counter = 0
        while len(values) < self.dimension:
            digest = hashlib.sha256(f"{counter}\x00{text}".encode("utf-8")).digest()
            for i in range(0, len(digest) - 3, 4):
                word = int.from_bytes(digest[i : i + 4], "big")
                values.append(word / 2**31 - 1.0)
                if len(values) == self.dimension:
                    break
            counter += 1
        return tuple(values)

    def embed(self, texts: Sequence[str]) -> tuple[list[EmbeddingVector], TokenUsage]:
        return [EmbeddingVector(self._vector(t)) for t in texts], TokenUsage()
