"""Composing horizontal retrieval with vertical traversal.

Naive mode answers from retrieved documents alone; combined mode also runs a
traversal and appends the critic's memory entries after the documents, which
is the whole integration: deep page facts ride along with shallow search
results into one generation prompt.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import requests

from .agent_core import (
    ABORTED,
    MemoryEntry,
    Query,
    RunBackends,
    RunConfig,
    run_query,
)
from .bench import BenchmarkItem
from .errors import RetrieverUnavailable
from .model_client import ChatMessage, GenerationParams, ModelBackend, complete
from .webenv import Fetcher

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 10

GENERATION_SYSTEM = (
    "Answer the question using the provided context. The context contains "
    "retrieved documents and may include notes collected while browsing the "
    "relevant website. Answer concisely; if the context is insufficient, say so."
)


@dataclass(frozen=True)
class RetrievedDoc:
    rank: int  # 1-based
    url: str
    snippet: str


class Retriever(Protocol):
    def search(self, query: str, k: int) -> list[RetrievedDoc]: ...


class FixtureRetriever:
    """Canned query -> results map for offline runs and tests."""

    def __init__(self, mapping: dict[str, list[dict]]):
        self._mapping = {self._norm(q): results for q, results in mapping.items()}

    @staticmethod
    def _norm(query: str) -> str:
        return " ".join(query.lower().split())

    @classmethod
    def from_json(cls, path: str | Path) -> "FixtureRetriever":
        return cls(json.loads(Path(path).read_text("utf-8")))

    def search(self, query: str, k: int) -> list[RetrievedDoc]:
        rows = self._mapping.get(self._norm(query), [])
        return [
            RetrievedDoc(rank=i + 1, url=row.get("url", ""), snippet=row.get("snippet", ""))
            for i, row in enumerate(rows[:k])
        ]


class HttpRetriever:
    """Remote search endpoint returning {"results": [{"url", "snippet"}]}."""

    def __init__(self, endpoint: str, api_key: str | None = None, timeout_s: float = 30.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout_s = timeout_s
        self._session = requests.Session()

    def search(self, query: str, k: int) -> list[RetrievedDoc]:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self._session.get(
                self.endpoint, params={"q": query, "k": k}, headers=headers,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise RetrieverUnavailable(str(exc)) from exc
        if resp.status_code != 200:
            raise RetrieverUnavailable(f"HTTP {resp.status_code} from retriever")
        try:
            rows = resp.json()["results"]
        except (ValueError, KeyError) as exc:
            raise RetrieverUnavailable(f"malformed retriever payload: {exc}") from exc
        return [
            RetrievedDoc(rank=i + 1, url=row.get("url", ""), snippet=row.get("snippet", ""))
            for i, row in enumerate(rows[:k])
        ]


def retrieve(query: str, k: int, retriever: Retriever) -> list[RetrievedDoc]:
    """Top-k retrieval; fewer than k results is fine, k < 1 is not."""
    if k < 1:
        raise ValueError("k must be >= 1")
    docs = retriever.search(query, k)
    return [RetrievedDoc(rank=i + 1, url=d.url, snippet=d.snippet) for i, d in enumerate(docs[:k])]


@dataclass(frozen=True)
class AugmentedContext:
    docs: tuple[RetrievedDoc, ...]
    memory_entries: tuple[MemoryEntry, ...]

    def render(self) -> str:
        parts = [render_docs(list(self.docs))]
        if self.memory_entries:
            lines = [
                f"[browsed | step {e.step_index} | {e.source_url}]\n{e.information}"
                for e in self.memory_entries
            ]
            parts.append("\n\n".join(lines))
        return "\n\n".join(p for p in parts if p)


def render_docs(docs: list[RetrievedDoc]) -> str:
    return "\n\n".join(f"[doc {d.rank}] {d.url}\n{d.snippet}" for d in docs)


def compose_context(docs: list[RetrievedDoc],
                    memory_entries: list[MemoryEntry]) -> AugmentedContext:
    """Documents first, then memory entries; with no memory the rendering is
    byte-identical to the naive docs rendering."""
    return AugmentedContext(docs=tuple(docs), memory_entries=tuple(memory_entries))


NAIVE = "naive"
COMBINED = "combined"


def answer_with_rag(item: BenchmarkItem, mode: str, *,
                    retriever: Retriever,
                    generator: ModelBackend,
                    k: int = DEFAULT_TOP_K,
                    run_config: RunConfig | None = None,
                    run_backends: RunBackends | None = None,
                    env: Fetcher | None = None) -> str:
    """Answer one benchmark item by retrieval, optionally augmented with a
    traversal of the item's root website.

    Combined mode needs run_config/run_backends/env; if the traversal aborts
    it degrades to the naive context with a logged warning.
    """
    if mode not in (NAIVE, COMBINED):
        raise ValueError(f"unknown mode {mode!r}")
    docs = retrieve(item.question, k, retriever)
    memory_entries: list[MemoryEntry] = []
    if mode == COMBINED:
        if run_config is None or run_backends is None or env is None:
            raise ValueError("combined mode requires run_config, run_backends, and env")
        run = run_query(Query(item.question, item.root_url), run_config, run_backends, env)
        if run.outcome == ABORTED:
            logger.warning("traversal aborted (%s); degrading to naive retrieval", run.error)
        else:
            memory_entries = list(run.memory.entries)
    context = compose_context(docs, memory_entries)
    user = f"Question: {item.question}\n\nContext:\n{context.render()}\n\nAnswer:"
    messages = [ChatMessage("system", GENERATION_SYSTEM), ChatMessage("user", user)]
    return complete(messages, GenerationParams(), generator)
