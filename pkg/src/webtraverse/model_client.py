"""Uniform access to a chat model: a remote OpenAI-compatible API or a
deterministic scripted backend, plus tolerant extraction of structured
replies."""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import requests

from .errors import EmptyCompletion, InvalidReply, NoJsonFound, ScriptExhausted, TransportFailure

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in ("user", "assistant") and not self.content:
            raise ValueError(f"empty content for role {self.role!r}")


@dataclass(frozen=True)
class GenerationParams:
    top_p: float = 0.8
    temperature: float | None = None
    max_tokens: int = 1024
    stop_sequences: tuple[str, ...] = ()


class ModelBackend(Protocol):
    def complete(self, messages: list[ChatMessage], params: GenerationParams) -> str: ...


def prompt_fingerprint(messages: list[ChatMessage]) -> str:
    """First 64 characters of the last user message, whitespace-normalized.

    Stable under prompt-template drift, which is what scripted map backends
    key on.
    """
    for message in reversed(messages):
        if message.role == "user":
            return re.sub(r"\s+", " ", message.content).strip()[:64]
    return ""


@dataclass
class _Call:
    messages: list[ChatMessage]
    params: GenerationParams
    reply: str


class ScriptedBackend:
    """Deterministic backend for tests and offline runs.

    Two modes: an ordered reply queue, or a fingerprint->reply map keyed by
    ``prompt_fingerprint``. Every call is recorded on ``calls``.
    """

    def __init__(self, replies: list[str] | None = None,
                 by_fingerprint: dict[str, str] | None = None):
        self._queue = list(replies or [])
        self._map = dict(by_fingerprint or {})
        self._lock = threading.Lock()
        self.calls: list[_Call] = []

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScriptedBackend":
        """Load replies from a JSONL file; lines with a "fingerprint" key go
        into the map, the rest into the ordered queue."""
        queue: list[str] = []
        mapping: dict[str, str] = {}
        for line in Path(path).read_text("utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "fingerprint" in record:
                mapping[record["fingerprint"]] = record["reply"]
            else:
                queue.append(record["reply"])
        return cls(replies=queue, by_fingerprint=mapping)

    def complete(self, messages: list[ChatMessage], params: GenerationParams) -> str:
        with self._lock:
            reply = self._next(messages)
            self.calls.append(_Call(messages=list(messages), params=params, reply=reply))
        return reply

    def _next(self, messages: list[ChatMessage]) -> str:
        if self._map:
            fp = prompt_fingerprint(messages)
            # exact fingerprint or prefix key; longest key wins on overlap
            matches = [k for k in self._map if k and fp.startswith(k)]
            if matches:
                return self._map[max(matches, key=len)]
            if not self._queue:
                raise ScriptExhausted(f"no scripted reply for fingerprint {fp!r}")
        if not self._queue:
            raise ScriptExhausted("scripted backend has no replies left")
        return self._queue.pop(0)


@dataclass
class RemoteBackend:
    """OpenAI-compatible chat-completions endpoint.

    Transient failures (connection errors, 5xx, 429) are retried with
    exponential backoff, up to ``attempts`` tries in total.
    """

    endpoint: str
    model_name: str
    api_key: str | None = None
    attempts: int = 3
    backoff_s: float = 0.5
    session: requests.Session = field(default_factory=requests.Session)
    timeout_s: float = 120.0

    def complete(self, messages: list[ChatMessage], params: GenerationParams) -> str:
        payload: dict = {
            "model": self.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        if params.temperature is not None:
            payload["temperature"] = params.temperature
        if params.stop_sequences:
            payload["stop"] = list(params.stop_sequences)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        url = self.endpoint.rstrip("/") + "/chat/completions"
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                resp = self.session.post(url, json=payload, headers=headers, timeout=self.timeout_s)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code in (429,) or resp.status_code >= 500:
                last_error = TransportFailure(f"HTTP {resp.status_code} from {url}")
                continue
            if resp.status_code != 200:
                raise TransportFailure(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
            content = self._content_of(resp)
            if not content:
                raise EmptyCompletion(f"empty completion from {self.model_name}")
            return content
        raise TransportFailure(f"giving up on {url} after {self.attempts} attempts: {last_error}")

    @staticmethod
    def _content_of(resp: requests.Response) -> str:
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportFailure(f"malformed completion payload: {exc}") from exc


def complete(messages: list[ChatMessage], params: GenerationParams, backend: ModelBackend) -> str:
    """Single entry point used by the agents; see backend classes for
    retry/determinism semantics."""
    if not messages:
        raise ValueError("messages must be non-empty")
    return backend.complete(messages, params)


_CORRECTIVE = ChatMessage(
    "user",
    "Your previous reply was not a valid JSON object in the required format. "
    "Reply again with only the JSON object.",
)


def extract_json_object(text: str) -> dict:
    """First syntactically valid top-level JSON object in ``text``.

    Tolerates fenced code blocks, language tags on fences, and leading or
    trailing prose. Raises NoJsonFound when nothing balanced parses.
    """
    decoder = json.JSONDecoder()
    for index, char in enumerate(text):
        if char != "{":
            continue
        try:
            value, _ = decoder.raw_decode(text, index)
        except ValueError:
            continue
        if isinstance(value, dict):
            return value
    raise NoJsonFound(f"no JSON object in reply: {text[:80]!r}")


def complete_json(messages: list[ChatMessage], params: GenerationParams,
                  backend: ModelBackend, reasks: int = 1) -> dict:
    """complete() plus JSON extraction, re-asking with a corrective
    instruction up to ``reasks`` times before giving up."""
    convo = list(messages)
    for attempt in range(reasks + 1):
        reply = complete(convo, params, backend)
        try:
            return extract_json_object(reply)
        except NoJsonFound:
            if attempt == reasks:
                raise
            logger.warning("malformed JSON reply, re-asking (%d/%d)", attempt + 1, reasks)
            convo = convo + [ChatMessage("assistant", reply or "(empty)"), _CORRECTIVE]
    raise NoJsonFound("unreachable")


def as_bool(value: object) -> bool:
    """Accept JSON booleans and their common string forms."""
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        return value.strip().lower() == "true"
    raise InvalidReply(f"expected a boolean, got {value!r}")
