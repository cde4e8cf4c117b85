"""Model providers, conversations, usage accounting and transcript logging."""

from __future__ import annotations

import abc
import hashlib
import json
import logging
import os
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from ..errors import ConfigError, ProviderError

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class Conversation:
    """Immutable message history; ``extend`` returns a longer copy."""

    messages: tuple[Message, ...] = ()

    @classmethod
    def start(cls, prompt: str, system: str | None = None) -> "Conversation":
        conv = cls()
        if system:
            conv = conv.extend("system", system)
        return conv.extend("user", prompt)

    def extend(self, role: str, content: str) -> "Conversation":
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        turns = [m.role for m in self.messages if m.role != "system"]
        if role == "system":
            if self.messages:
                raise ValueError("system message must come first")
        else:
            expected = "user" if not turns or turns[-1] == "assistant" else "assistant"
            if role != expected:
                raise ValueError(f"expected a {expected} message, got {role}")
        return Conversation(self.messages + (Message(role, content),))

    def last(self, role: str) -> str | None:
        for m in reversed(self.messages):
            if m.role == role:
                return m.content
        return None

    def to_list(self) -> list[dict[str, str]]:
        return [{"role": m.role, "content": m.content} for m in self.messages]

    @classmethod
    def from_list(cls, items: Iterable[Mapping[str, str]]) -> "Conversation":
        return cls(tuple(Message(i["role"], i["content"]) for i in items))

    def digest(self) -> str:
        blob = json.dumps(self.to_list(), ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class UsageRecord:
    queries: int = 0
    tokens: int = 0

    def __add__(self, other: "UsageRecord") -> "UsageRecord":
        return UsageRecord(self.queries + other.queries, self.tokens + other.tokens)

    def __sub__(self, other: "UsageRecord") -> "UsageRecord":
        return UsageRecord(self.queries - other.queries, self.tokens - other.tokens)


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


def whitespace_tokens(text: str) -> int:
    return len(text.split())


class Provider(abc.ABC):
    @abc.abstractmethod
    def complete(self, model_id: str, conversation: Conversation, seed: int) -> Completion:
        """Return the model's reply; raise ProviderError on transport failure."""


@dataclass(frozen=True)
class MockRule:
    """One scripted reply. Every set criterion must hold for the rule to fire.

    ``contains`` is matched against the latest user message, ``prompt_contains``
    against the first user message (the one naming the target function).
    """

    text: str
    model: str | None = None
    contains: str | None = None
    prompt_contains: str | None = None
    seed: int | None = None

    def matches(self, model_id: str, conversation: Conversation, seed: int) -> bool:
        if self.model is not None and self.model != model_id:
            return False
        if self.seed is not None and self.seed != seed:
            return False
        if self.contains is not None and self.contains not in (conversation.last("user") or ""):
            return False
        if self.prompt_contains is not None:
            first = next((m.content for m in conversation.messages if m.role == "user"), "")
            if self.prompt_contains not in first:
                return False
        return True


class MockProvider(Provider):
    """Deterministic offline provider.

    Lookup order: ``script["<digest>:<seed>"]``, ``script["<digest>"]``, the
    first matching rule, then ``responder(model_id, conversation, seed)``.
    Anything else is reported as a transport failure.
    """

    def __init__(
        self,
        script: Mapping[str, str] | None = None,
        rules: Sequence[MockRule] = (),
        responder: Callable[[str, Conversation, int], str] | None = None,
    ):
        self.script = dict(script or {})
        self.rules = list(rules)
        self.responder = responder

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "MockProvider":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [MockRule(**r) for r in data.get("rules", [])]
        return cls(data.get("script"), rules)

    def complete(self, model_id: str, conversation: Conversation, seed: int) -> Completion:
        digest = conversation.digest()
        text = self.script.get(f"{digest}:{seed}", self.script.get(digest))
        if text is None:
            for rule in self.rules:
                if rule.matches(model_id, conversation, seed):
                    text = rule.text
                    break
        if text is None and self.responder is not None:
            text = self.responder(model_id, conversation, seed)
        if text is None:
            raise ProviderError(f"mock has no reply for {model_id} digest={digest[:12]} seed={seed}")
        prompt_tokens = sum(whitespace_tokens(m.content) for m in conversation.messages)
        return Completion(text, prompt_tokens, whitespace_tokens(text))


class ReplayProvider(Provider):
    """Replays responses recorded in a transcript, keyed by (model, conversation, seed)."""

    def __init__(self, records: Iterable[Mapping[str, Any]]):
        self._queue: dict[tuple[str, str, int], deque] = defaultdict(deque)
        for rec in records:
            if rec.get("kind", "generate") != "generate":
                continue
            conv = Conversation.from_list(rec["conversation"])
            self._queue[(rec["model_id"], conv.digest(), int(rec["seed"]))].append(rec)
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ReplayProvider":
        return cls(read_transcript(path)[1])

    def complete(self, model_id: str, conversation: Conversation, seed: int) -> Completion:
        key = (model_id, conversation.digest(), seed)
        with self._lock:
            queue = self._queue.get(key)
            if not queue:
                raise ProviderError(f"transcript has no record for {model_id} seed={seed}")
            rec = queue.popleft() if len(queue) > 1 else queue[0]
        if rec.get("response") is None:
            raise ProviderError(rec.get("error") or "recorded transport failure")
        usage = rec.get("usage") or {}
        return Completion(rec["response"], usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0))


class HttpProvider(Provider):
    """OpenAI-compatible chat-completions endpoint."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        credentials_env: str | None = None,
        temperature: float | None = None,
        timeout: float = 120.0,
    ):
        self.endpoint = endpoint
        self.model = model
        self.credentials_env = credentials_env
        self.temperature = temperature
        self.timeout = timeout

    def complete(self, model_id: str, conversation: Conversation, seed: int) -> Completion:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.credentials_env:
            key = os.environ.get(self.credentials_env)
            if not key:
                raise ConfigError(f"environment variable {self.credentials_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        payload: dict[str, Any] = {"model": self.model, "messages": conversation.to_list(), "seed": seed}
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        try:
            resp = httpx.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"{model_id}: {exc}") from exc
        usage = data.get("usage") or {}
        prompt_tokens = usage.get("prompt_tokens")
        completion_tokens = usage.get("completion_tokens")
        if prompt_tokens is None or completion_tokens is None:
            prompt_tokens = sum(whitespace_tokens(m.content) for m in conversation.messages)
            completion_tokens = whitespace_tokens(text)
        return Completion(text, int(prompt_tokens), int(completion_tokens))


class ModelPool:
    """Ordered mapping of model id to provider."""

    def __init__(self, providers: Mapping[str, Provider]):
        if not providers:
            raise ConfigError("model pool is empty")
        self.providers = dict(providers)

    @property
    def K(self) -> int:
        return len(self.providers)

    @property
    def model_ids(self) -> list[str]:
        return list(self.providers)

    def __contains__(self, model_id: str) -> bool:
        return model_id in self.providers

    def __getitem__(self, model_id: str) -> Provider:
        try:
            return self.providers[model_id]
        except KeyError:
            raise ConfigError(f"model {model_id!r} is not in the pool") from None


# ---------------------------------------------------------------------------
# transcripts


class TranscriptLog:
    """Append-only JSON-lines log of every generate call."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path else None
        self.records: list[dict[str, Any]] = []
        self._lock = threading.Lock()
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def append(self, record: Mapping[str, Any]) -> None:
        rec = dict(record)
        with self._lock:
            self.records.append(rec)
            if self.path:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")

    def generate_records(self) -> list[dict[str, Any]]:
        return [r for r in self.records if r.get("kind") == "generate"]


def read_transcript(path: str | os.PathLike) -> tuple[dict[str, Any] | None, list[dict[str, Any]]]:
    """Return (run header or None, generate records)."""
    header = None
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("kind") == "run":
            header = rec
        else:
            records.append(rec)
    return header, records


# ---------------------------------------------------------------------------
# the refiner F


class Refiner:
    """Sends conversations to the pool with retries, tracking usage and transcripts.

    ``queries`` counts every generate call once, whether it succeeded or not;
    tokens only accrue from completed calls.
    """

    def __init__(
        self,
        pool: ModelPool,
        *,
        transcript: TranscriptLog | None = None,
        retries: int = 2,
        backoff: float = 0.5,
    ):
        self.pool = pool
        self.transcript = transcript if transcript is not None else TranscriptLog()
        self.retries = retries
        self.backoff = backoff
        self._usage = UsageRecord()
        self._lock = threading.Lock()

    @property
    def usage(self) -> UsageRecord:
        return self._usage

    def generate(
        self,
        model_id: str,
        conversation: Conversation,
        seed: int,
        *,
        node_id: str | None = None,
        function_id: str | None = None,
    ) -> tuple[str, UsageRecord]:
        provider = self.pool[model_id]
        error: ProviderError | None = None
        completion = None
        for attempt in range(self.retries + 1):
            try:
                completion = provider.complete(model_id, conversation, seed)
                break
            except ProviderError as exc:
                error = exc
                log.warning("generate failed (%s, attempt %d): %s", model_id, attempt + 1, exc)
                if attempt < self.retries and self.backoff > 0:
                    time.sleep(self.backoff * (2**attempt))
        delta = UsageRecord(1, completion.tokens if completion else 0)
        with self._lock:
            self._usage = self._usage + delta
        self.transcript.append(
            {
                "kind": "generate",
                "function_id": function_id,
                "node_id": node_id,
                "model_id": model_id,
                "seed": seed,
                "conversation": conversation.to_list(),
                "response": completion.text if completion else None,
                "error": None if completion else str(error),
                "usage": {
                    "prompt_tokens": completion.prompt_tokens if completion else 0,
                    "completion_tokens": completion.completion_tokens if completion else 0,
                },
            }
        )
        if completion is None:
            raise ProviderError(f"{model_id}: giving up after {self.retries + 1} attempts: {error}")
        return completion.text, delta
