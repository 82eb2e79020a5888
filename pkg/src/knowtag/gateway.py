"""Chat-completion gateway.

One blocking ``complete(request)`` call over three backends:

* ``HttpBackend`` talks to an OpenAI-compatible ``/chat/completions`` endpoint,
* ``ReplayBackend`` answers from a :class:`TranscriptStore`,
* ``MockBackend`` answers from a scripted list of responses.

A :class:`Gateway` wraps any backend and, when given a store, records one
:class:`TranscriptRecord` per successful call.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import threading
import time
from collections.abc import Callable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Protocol

import httpx
import yaml

from .errors import (
    ConfigError,
    CorruptArchiveError,
    MockMissError,
    RateLimitError,
    ReplayMissError,
    TransportError,
)

log = logging.getLogger(__name__)

ARCHIVE_FORMAT = "knowtag-transcripts"
ARCHIVE_VERSION = 1


class Role(enum.Enum):
    PLANNER = "planner"
    SOLVER = "solver"
    SEMANTIC_JUDGER = "semantic_judger"
    NUMERICAL_JUDGER = "numerical_judger"


class Speaker(enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class FinishReason(enum.Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class ModelProfile:
    role: Role
    model_name: str
    temperature: float = 0.0
    max_tokens: int = 1024
    endpoint: str = "https://api.openai.com/v1"
    credential_ref: str = "OPENAI_API_KEY"

    def __post_init__(self):
        if not self.model_name:
            raise ConfigError(f"{self.role.value}: model_name must be nonempty")
        if not 0 <= self.temperature <= 2:
            raise ConfigError(f"{self.role.value}: temperature {self.temperature} outside [0, 2]")
        if self.max_tokens < 1:
            raise ConfigError(f"{self.role.value}: max_tokens must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "role": self.role.value,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "endpoint": self.endpoint,
            "credential_ref": self.credential_ref,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ModelProfile:
        return cls(
            role=Role(d["role"]),
            model_name=d["model_name"],
            temperature=float(d["temperature"]),
            max_tokens=int(d["max_tokens"]),
            endpoint=d["endpoint"],
            credential_ref=d["credential_ref"],
        )


def default_profiles() -> dict[Role, ModelProfile]:
    # Only the numerical judger has a documented setting (gpt-4o at 0.7).
    return {
        Role.PLANNER: ModelProfile(Role.PLANNER, "gpt-4o-2024-05-13"),
        Role.SOLVER: ModelProfile(Role.SOLVER, "gpt-4o-2024-05-13"),
        Role.SEMANTIC_JUDGER: ModelProfile(Role.SEMANTIC_JUDGER, "gpt-4o-2024-05-13"),
        Role.NUMERICAL_JUDGER: ModelProfile(Role.NUMERICAL_JUDGER, "gpt-4o-2024-05-13", temperature=0.7),
    }


@dataclass(frozen=True)
class Message:
    speaker: Speaker
    text: str


@dataclass(frozen=True)
class ChatRequest:
    """A chat request.

    ``context`` carries routing metadata (concept id, question id, agent
    step) for the mock backend and for transcript statistics. It is not
    part of the transcript key.
    """

    messages: tuple[Message, ...]
    profile: ModelProfile
    context: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.messages[-1].speaker is not Speaker.USER:
            raise ValueError("the final message of a chat request must come from the user")

    @classmethod
    def user(cls, text: str, profile: ModelProfile, **context: str) -> ChatRequest:
        return cls((Message(Speaker.USER, text),), profile, dict(context))

    @property
    def prompt(self) -> str:
        return self.messages[-1].text

    def to_dict(self) -> dict[str, Any]:
        return {
            "messages": [{"speaker": m.speaker.value, "text": m.text} for m in self.messages],
            "profile": self.profile.to_dict(),
            "context": dict(sorted(self.context.items())),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ChatRequest:
        return cls(
            messages=tuple(Message(Speaker(m["speaker"]), m["text"]) for m in d["messages"]),
            profile=ModelProfile.from_dict(d["profile"]),
            context=dict(d.get("context", {})),
        )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: FinishReason = FinishReason.STOP
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.finish_reason is FinishReason.STOP and not self.text:
            raise ValueError("a response that finished normally must carry text")
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token usage must be nonnegative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "finish_reason": self.finish_reason.value,
            "usage": {"prompt_tokens": self.prompt_tokens, "completion_tokens": self.completion_tokens},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ChatResponse:
        usage = d.get("usage") or {}
        return cls(
            text=d["text"],
            finish_reason=FinishReason(d["finish_reason"]),
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        )


def _canonical_text(text: str) -> str:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return "\n".join(line.rstrip() for line in text.split("\n")).rstrip()


def transcript_key(request: ChatRequest) -> str:
    """SHA-256 over (model, temperature, canonicalized messages)."""
    payload = {
        "model": request.profile.model_name,
        "temperature": repr(float(request.profile.temperature)),
        "messages": [[m.speaker.value, _canonical_text(m.text)] for m in request.messages],
    }
    blob = json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TranscriptRecord:
    key: str
    request: ChatRequest
    response: ChatResponse
    timestamp: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key,
            "request": self.request.to_dict(),
            "response": self.response.to_dict(),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TranscriptRecord:
        return cls(d["key"], ChatRequest.from_dict(d["request"]), ChatResponse.from_dict(d["response"]),
                   d["timestamp"])


def _dump_line(obj: Mapping[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


class TranscriptStore:
    """Keyed transcript records, optionally persisted as a JSONL file.

    Each successful recorded call appends one line. On lookup the first
    record for a key wins, so replays are stable even if a key was
    recorded more than once.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._records: list[TranscriptRecord] = []
        self._by_key: dict[str, TranscriptRecord] = {}
        if self.path is not None and self.path.exists():
            for rec in _read_record_lines(self.path.read_text(encoding="utf-8").splitlines(), str(self.path)):
                self._add(rec)

    def _add(self, record: TranscriptRecord) -> None:
        self._records.append(record)
        self._by_key.setdefault(record.key, record)

    def put(self, record: TranscriptRecord) -> None:
        with self._lock:
            self._add(record)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(_dump_line(record.to_dict()))

    def get(self, key: str) -> TranscriptRecord | None:
        with self._lock:
            return self._by_key.get(key)

    def __contains__(self, key: str) -> bool:
        return self.get(key) is not None

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def __iter__(self) -> Iterator[TranscriptRecord]:
        with self._lock:
            return iter(list(self._records))

    def keys(self) -> list[str]:
        return [r.key for r in self]

    def role_counts(self) -> dict[str, int]:
        counts = {role.value: 0 for role in Role}
        for rec in self:
            counts[rec.request.profile.role.value] += 1
        return counts


def _read_record_lines(lines: Iterable[str], source: str) -> Iterator[TranscriptRecord]:
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            yield TranscriptRecord.from_dict(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptArchiveError(f"{source}:{lineno}: bad transcript record ({exc})") from exc


def export_transcripts(store: TranscriptStore, archive: str | os.PathLike) -> int:
    """Write ``store`` to ``archive``: a header line with the record count, then one record per line."""
    records = list(store)
    with open(archive, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump_line({"format": ARCHIVE_FORMAT, "version": ARCHIVE_VERSION, "count": len(records)}))
        for rec in records:
            fh.write(_dump_line(rec.to_dict()))
    return len(records)


def import_transcripts(archive: str | os.PathLike, into: str | os.PathLike | None = None) -> TranscriptStore:
    """Load an archive written by :func:`export_transcripts`.

    The header's record count catches truncation at a line boundary; a
    half-written line fails to decode. Either raises CorruptArchiveError.
    """
    try:
        text = Path(archive).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptArchiveError(f"{archive}: not UTF-8") from exc
    lines = text.splitlines()
    if not lines:
        raise CorruptArchiveError(f"{archive}: missing archive header")
    try:
        header = json.loads(lines[0])
        ok = header.get("format") == ARCHIVE_FORMAT and isinstance(header.get("count"), int)
    except (ValueError, AttributeError):
        ok = False
    if not ok:
        raise CorruptArchiveError(f"{archive}: missing or malformed archive header")
    if not text.endswith("\n"):
        raise CorruptArchiveError(f"{archive}: archive is truncated (no final newline)")
    records = list(_read_record_lines(lines[1:], str(archive)))
    if len(records) != header["count"]:
        raise CorruptArchiveError(f"{archive}: header announces {header['count']} records, found {len(records)}")
    if into is not None:
        Path(into).unlink(missing_ok=True)
    store = TranscriptStore(into)
    for rec in records:
        store.put(rec)
    return store


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


class ReplayBackend:
    def __init__(self, store: TranscriptStore):
        self.store = store

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = transcript_key(request)
        rec = self.store.get(key)
        if rec is None:
            raise ReplayMissError(
                f"no recorded transcript for {request.profile.role.value} request {key[:12]}"
                " (prompt or corpus changed since recording?)"
            )
        return rec.response


Responder = Callable[[ChatRequest], str]


@dataclass
class MockEntry:
    """One scripted response.

    Match fields left as None match anything. ``contains`` must be a
    substring of the final user message. ``times`` is how often the entry
    may be used; None means unlimited.
    """

    role: Role
    response: str | Responder
    concept_id: str | None = None
    question_id: str | None = None
    step: str | None = None
    contains: str | None = None
    times: int | None = 1
    used: int = 0

    def matches(self, request: ChatRequest) -> bool:
        ctx = request.context
        return (
            request.profile.role is self.role
            and (self.concept_id is None or ctx.get("concept_id") == self.concept_id)
            and (self.question_id is None or ctx.get("question_id") == self.question_id)
            and (self.step is None or ctx.get("step") == self.step)
            and (self.contains is None or self.contains in request.prompt)
        )

    @property
    def exhausted(self) -> bool:
        return self.times is not None and self.used >= self.times


_MOCK_KEYS = {"role", "response", "concept_id", "question_id", "step", "contains", "times", "repeat"}


class MockBackend:
    """Deterministic scripted backend.

    For each request the first matching, non-exhausted entry in
    declaration order answers it.
    """

    def __init__(self, entries: Iterable[MockEntry]):
        self.entries = list(entries)
        self._lock = threading.Lock()

    @classmethod
    def from_script(cls, path: str | os.PathLike) -> MockBackend:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"mock script not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"mock script {path} is not valid YAML: {exc}") from exc
        items = data.get("responses") if isinstance(data, dict) else data
        if not isinstance(items, list):
            raise ConfigError(f"mock script {path} must hold a list under 'responses'")
        entries = []
        for i, item in enumerate(items):
            if not isinstance(item, dict) or "role" not in item or "response" not in item:
                raise ConfigError(f"mock script {path} entry {i} needs 'role' and 'response'")
            unknown = set(item) - _MOCK_KEYS
            if unknown:
                raise ConfigError(f"mock script {path} entry {i} has unknown keys {sorted(unknown)}")
            try:
                role = Role(item["role"])
            except ValueError as exc:
                raise ConfigError(f"mock script {path} entry {i}: unknown role {item['role']!r}") from exc
            times = None if item.get("repeat") else int(item.get("times", 1))
            entries.append(MockEntry(
                role=role,
                response=str(item["response"]),
                concept_id=item.get("concept_id"),
                question_id=item.get("question_id"),
                step=item.get("step"),
                contains=item.get("contains"),
                times=times,
            ))
        return cls(entries)

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            for entry in self.entries:
                if entry.exhausted or not entry.matches(request):
                    continue
                entry.used += 1
                response = entry.response
                break
            else:
                raise MockMissError(
                    f"no scripted response left for role={request.profile.role.value}"
                    f" context={dict(request.context)}"
                )
        text = response(request) if callable(response) else response
        return ChatResponse(text=text, completion_tokens=len(text.split()))


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    initial_backoff: float = 1.0
    max_total_backoff: float = 30.0

    def delays(self) -> Iterator[float]:
        """Sleep before attempts 2..max_attempts; the sum never exceeds the ceiling."""
        spent = 0.0
        for i in range(self.max_attempts - 1):
            delay = min(self.initial_backoff * 2**i, self.max_total_backoff - spent)
            spent += delay
            yield max(delay, 0.0)


class HttpBackend:
    """OpenAI-compatible chat completions over HTTP."""

    def __init__(self, retry: RetryPolicy = RetryPolicy(), max_in_flight: int = 8,
                 client: httpx.Client | None = None, sleep: Callable[[float], None] = time.sleep,
                 timeout: float = 120.0):
        self.retry = retry
        self.client = client or httpx.Client(timeout=timeout)
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _payload(self, request: ChatRequest) -> dict[str, Any]:
        p = request.profile
        return {
            "model": p.model_name,
            "messages": [{"role": m.speaker.value, "content": m.text} for m in request.messages],
            "temperature": p.temperature,
            "max_tokens": p.max_tokens,
        }

    def complete(self, request: ChatRequest) -> ChatResponse:
        p = request.profile
        token = os.environ.get(p.credential_ref)
        if not token:
            raise ConfigError(f"environment variable {p.credential_ref} is not set")
        url = p.endpoint.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {token}"}
        delays = self.retry.delays()
        last_error: Exception | None = None
        rate_limited = False
        for attempt in range(1, self.retry.max_attempts + 1):
            try:
                with self._slots:
                    resp = self.client.post(url, json=self._payload(request), headers=headers)
            except httpx.HTTPError as exc:
                last_error, rate_limited = exc, False
            else:
                if resp.status_code == 200:
                    return _parse_completion(resp)
                rate_limited = resp.status_code == 429
                last_error = TransportError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
                if not rate_limited and resp.status_code < 500:
                    raise last_error
            if attempt < self.retry.max_attempts:
                delay = next(delays)
                log.warning("attempt %d/%d for %s failed (%s); retrying in %.1fs",
                            attempt, self.retry.max_attempts, p.role.value, last_error, delay)
                self.sleep(delay)
        if rate_limited:
            raise RateLimitError(f"rate limited by {url} after {self.retry.max_attempts} attempts")
        raise TransportError(f"request to {url} failed after {self.retry.max_attempts} attempts: {last_error}")


def _parse_completion(resp: httpx.Response) -> ChatResponse:
    try:
        body = resp.json()
        choice = body["choices"][0]
        text = choice["message"]["content"] or ""
        reason = {"stop": FinishReason.STOP, "length": FinishReason.LENGTH}.get(
            choice.get("finish_reason"), FinishReason.ERROR)
        usage = body.get("usage") or {}
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed chat completion body: {exc}") from exc
    if reason is FinishReason.STOP and not text:
        reason = FinishReason.ERROR
    return ChatResponse(text, reason, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))


class Gateway:
    """Per-role profiles plus a backend, recording into ``store`` when given."""

    def __init__(self, backend: Backend, profiles: Mapping[Role, ModelProfile] | None = None,
                 store: TranscriptStore | None = None,
                 clock: Callable[[], datetime] = lambda: datetime.now(timezone.utc)):
        self.backend = backend
        self.profiles = dict(profiles or default_profiles())
        self.store = store
        self.clock = clock

    def profile(self, role: Role) -> ModelProfile:
        return self.profiles[role]

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.backend.complete(request)
        if self.store is not None and not isinstance(self.backend, ReplayBackend):
            self.store.put(TranscriptRecord(transcript_key(request), request, response,
                                            self.clock().isoformat()))
        return response

    def ask(self, role: Role, prompt: str, **context: str) -> tuple[ChatResponse, str]:
        """Send a single-user-message prompt; return the response and its transcript key."""
        request = ChatRequest.user(prompt, self.profile(role), **context)
        return self.complete(request), transcript_key(request)
