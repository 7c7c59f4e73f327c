"""Web environment: fetching, caching, and observation assembly.

Transports are pluggable so runs work against the live web or an in-memory
site. The fetcher canonicalizes URLs, enforces scope, follows redirects, and
caches records keyed by canonical URL so reruns never touch the network.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import threading
import urllib.robotparser
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol
from urllib.parse import urlsplit

import requests

from .errors import (
    HttpError,
    NonHtmlContent,
    RobotsDisallowed,
    ScopeViolation,
    Timeout,
    TransportFailure,
)
from .htmlview import Button, decode_body, extract_buttons, page_title, to_markdown
from .urls import ScopeRule, canonicalize

logger = logging.getLogger(__name__)

_HTML_TYPES = {"text/html", "application/xhtml+xml"}


def media_type(content_type: str) -> str:
    return (content_type or "").split(";")[0].strip().lower()


def is_html(content_type: str) -> bool:
    return media_type(content_type) in _HTML_TYPES


@dataclass(frozen=True)
class RawPage:
    """One fetched resource, as it came off the wire."""

    requested_url: str
    final_url: str
    status: int
    content_type: str
    body: bytes


@dataclass(frozen=True)
class Page:
    """A parsed page: markdown body plus its clickable buttons."""

    url: str
    title: str
    markdown: str
    buttons: tuple[Button, ...]
    truncated: bool = False


@dataclass(frozen=True)
class Observation:
    """What the explorer sees at one step: the page and the frontier of
    clickable, unvisited buttons."""

    page: Page
    frontier_view: tuple[Button, ...]
    step_index: int


@dataclass(frozen=True)
class ObservationLimits:
    markdown_cap: int = 8000
    button_cap: int = 50


@dataclass(frozen=True)
class FetchPolicy:
    timeout_s: float = 20.0
    max_redirects: int = 5
    user_agent: str = "webtraverse/0.1"
    respect_robots: bool = True
    scope_mode: str = "same_host"


@dataclass(frozen=True)
class TransportReply:
    status: int
    content_type: str
    body: bytes
    final_url: str


class Transport(Protocol):
    local: bool

    def get(self, url: str, *, timeout: float, user_agent: str, max_redirects: int) -> TransportReply: ...


class HttpTransport:
    """Live HTTP via requests."""

    local = False

    def __init__(self, session: requests.Session | None = None):
        self._session = session or requests.Session()

    def get(self, url: str, *, timeout: float, user_agent: str, max_redirects: int) -> TransportReply:
        self._session.max_redirects = max_redirects
        try:
            resp = self._session.get(
                url, timeout=timeout, headers={"User-Agent": user_agent}, allow_redirects=True
            )
        except requests.Timeout as exc:
            raise Timeout(f"timeout fetching {url}") from exc
        except requests.TooManyRedirects as exc:
            raise TransportFailure(f"redirect limit exceeded for {url}") from exc
        except requests.RequestException as exc:
            raise TransportFailure(f"transport error for {url}: {exc}") from exc
        return TransportReply(
            status=resp.status_code,
            content_type=resp.headers.get("Content-Type", ""),
            body=resp.content,
            final_url=str(resp.url),
        )


class InMemoryTransport:
    """Deterministic transport backed by a dict of canonical URL -> reply.

    Records every request so tests can assert exactly what was touched.
    """

    local = True

    def __init__(self) -> None:
        self.pages: dict[str, TransportReply] = {}
        self.requests_seen: list[str] = []
        self._lock = threading.Lock()

    def add(self, url: str, body: bytes | str, *, status: int = 200,
            content_type: str = "text/html; charset=utf-8", final_url: str | None = None) -> None:
        data = body.encode("utf-8") if isinstance(body, str) else body
        canon = canonicalize(url)
        self.pages[canon] = TransportReply(
            status=status, content_type=content_type, body=data, final_url=final_url or canon
        )

    def get(self, url: str, *, timeout: float, user_agent: str, max_redirects: int) -> TransportReply:
        canon = canonicalize(url)
        with self._lock:
            self.requests_seen.append(canon)
        reply = self.pages.get(canon)
        if reply is None:
            return TransportReply(status=404, content_type="text/plain", body=b"not found", final_url=canon)
        return reply


class PageCache:
    """In-process cache of RawPage records, keyed by canonical URL."""

    def __init__(self) -> None:
        self._records: dict[str, RawPage] = {}
        self._lock = threading.Lock()

    def get(self, url: str) -> RawPage | None:
        with self._lock:
            return self._records.get(url)

    def put(self, raw: RawPage) -> None:
        with self._lock:
            self._records[raw.final_url] = raw
            self._records[raw.requested_url] = raw


class DiskCache(PageCache):
    """Cache persisted as one JSON record per canonical-URL hash, so
    benchmark reruns are reproducible offline."""

    def __init__(self, directory: str | Path):
        super().__init__()
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def _key(url: str) -> str:
        return hashlib.sha256(url.encode("utf-8")).hexdigest()

    def get(self, url: str) -> RawPage | None:
        hit = super().get(url)
        if hit is not None:
            return hit
        path = self.directory / f"{self._key(url)}.json"
        if not path.exists():
            return None
        record = json.loads(path.read_text("utf-8"))
        raw = RawPage(
            requested_url=record["requested_url"],
            final_url=record["final_url"],
            status=record["status"],
            content_type=record["content_type"],
            body=base64.b64decode(record["body_b64"]),
        )
        super().put(raw)
        return raw

    def put(self, raw: RawPage) -> None:
        super().put(raw)
        record = json.dumps({
            "requested_url": raw.requested_url,
            "final_url": raw.final_url,
            "status": raw.status,
            "content_type": raw.content_type,
            "body_b64": base64.b64encode(raw.body).decode("ascii"),
        })
        for url in {raw.final_url, raw.requested_url}:
            (self.directory / f"{self._key(url)}.json").write_text(record, "utf-8")


class _RobotsGate:
    """Per-host robots.txt decisions, cached. Fetch failures mean allow."""

    def __init__(self, transport: Transport, policy: FetchPolicy):
        self._transport = transport
        self._policy = policy
        self._parsers: dict[str, urllib.robotparser.RobotFileParser | None] = {}
        self._lock = threading.Lock()

    def allowed(self, url: str) -> bool:
        parts = urlsplit(url)
        key = parts.netloc
        with self._lock:
            if key not in self._parsers:
                self._parsers[key] = self._load(parts.scheme, key)
            parser = self._parsers[key]
        return parser is None or parser.can_fetch(self._policy.user_agent, url)

    def _load(self, scheme: str, netloc: str):
        robots_url = f"{scheme}://{netloc}/robots.txt"
        try:
            reply = self._transport.get(
                robots_url, timeout=self._policy.timeout_s,
                user_agent=self._policy.user_agent, max_redirects=self._policy.max_redirects,
            )
        except (Timeout, TransportFailure) as exc:
            logger.debug("robots.txt unavailable for %s (%s); allowing", netloc, exc)
            return None
        if reply.status != 200:
            return None
        parser = urllib.robotparser.RobotFileParser()
        parser.parse(decode_body(reply.body, reply.content_type).splitlines())
        return parser


class Fetcher:
    """Scope-checked, cached page fetching over a pluggable transport.

    Safe for concurrent use by multiple runs; one run calls it sequentially.
    """

    def __init__(self, transport: Transport, policy: FetchPolicy | None = None,
                 cache: PageCache | None = None):
        self.transport = transport
        self.policy = policy or FetchPolicy()
        self.cache = cache or PageCache()
        self._robots = _RobotsGate(transport, self.policy)
        self._lock = threading.Lock()
        self.transport_calls = 0

    def fetch(self, url: str, scope: ScopeRule) -> RawPage:
        """Fetch one page within scope; cached results bypass the transport."""
        canon = canonicalize(url)
        if not scope.allows(canon):
            raise ScopeViolation(f"{canon} is outside the traversal scope")

        cached = self.cache.get(canon)
        if cached is not None:
            return cached

        if self.policy.respect_robots and not self.transport.local:
            if not self._robots.allowed(canon):
                raise RobotsDisallowed(f"robots.txt disallows {canon}")

        with self._lock:
            self.transport_calls += 1
        reply = self.transport.get(
            canon, timeout=self.policy.timeout_s,
            user_agent=self.policy.user_agent, max_redirects=self.policy.max_redirects,
        )
        final = canonicalize(reply.final_url)
        if not scope.allows(final):
            raise ScopeViolation(f"redirect escaped scope: {canon} -> {final}")
        if not 200 <= reply.status < 300:
            raise HttpError(reply.status, canon)
        if not is_html(reply.content_type):
            raise NonHtmlContent(f"{canon} served {media_type(reply.content_type)!r}")
        if not reply.body:
            raise TransportFailure(f"empty body from {canon}")

        raw = RawPage(
            requested_url=canon, final_url=final,
            status=reply.status, content_type=reply.content_type, body=reply.body,
        )
        self.cache.put(raw)
        return raw


def build_page(raw: RawPage, scope: ScopeRule) -> Page:
    """Parse a fetched page into markdown plus in-scope buttons."""
    html = decode_body(raw.body, raw.content_type)
    return Page(
        url=raw.final_url,
        title=page_title(html),
        markdown=to_markdown(html),
        buttons=tuple(extract_buttons(html, raw.final_url, scope)),
    )


def build_observation(page: Page, visited: set[str], prior_frontier: list[Button],
                      limits: ObservationLimits, step_index: int,
                      frontier_mode: str = "global_frontier") -> Observation:
    """Assemble what the explorer sees.

    The current page's unvisited buttons come first; in global-frontier mode
    the still-unvisited buttons from earlier pages follow, oldest first. The
    whole list is capped, and long markdown is cut at the character cap with
    the truncated flag set.
    """
    markdown = page.markdown
    truncated = False
    if len(markdown) > limits.markdown_cap:
        markdown = markdown[: limits.markdown_cap]
        truncated = True
    shown_page = replace(page, markdown=markdown, truncated=truncated)

    current = [b for b in page.buttons if b.target not in visited]
    view = list(current)
    if frontier_mode == "global_frontier":
        current_targets = {b.target for b in current}
        for button in prior_frontier:
            if button.target not in visited and button.target not in current_targets:
                view.append(button)
    return Observation(
        page=shown_page,
        frontier_view=tuple(view[: limits.button_cap]),
        step_index=step_index,
    )
