"""URL canonicalization and traversal scope rules.

Canonical form: lowercase scheme and host, default port elided, fragment
stripped, dot-segments removed, empty path replaced by "/", trailing runs
of "/" collapsed to a single one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from urllib.parse import urljoin, urlsplit, urlunsplit

from .errors import MalformedReference

_DEFAULT_PORTS = {"http": 80, "https": 443}


def _remove_dot_segments(path: str) -> str:
    # RFC 3986 section 5.2.4; urljoin only applies it to relative references.
    output: list[str] = []
    for segment in path.split("/"):
        if segment == ".":
            continue
        if segment == "..":
            if output and output[-1] != "":
                output.pop()
            continue
        output.append(segment)
    if path.endswith(("/.", "/..")):
        output.append("")
    cleaned = "/".join(output)
    if path.startswith("/") and not cleaned.startswith("/"):
        cleaned = "/" + cleaned
    return cleaned


def normalize_url(base: str, href: str) -> str:
    """Resolve ``href`` against ``base`` and return the canonical absolute URL.

    Raises MalformedReference for non-http(s) schemes (mailto:, javascript:,
    ...), missing hosts, or unparseable ports.
    """
    joined = urljoin(base, href.strip())
    try:
        parts = urlsplit(joined)
        port = parts.port  # raises ValueError on out-of-range ports
    except ValueError as exc:
        raise MalformedReference(f"cannot resolve {href!r} against {base!r}: {exc}") from exc

    scheme = parts.scheme.lower()
    if scheme not in ("http", "https"):
        raise MalformedReference(f"unsupported scheme {scheme!r} in {href!r}")
    host = (parts.hostname or "").lower()
    if not host:
        raise MalformedReference(f"no host in {joined!r}")

    netloc = host
    if port is not None and port != _DEFAULT_PORTS[scheme]:
        netloc = f"{host}:{port}"
    if parts.username:
        cred = parts.username if parts.password is None else f"{parts.username}:{parts.password}"
        netloc = f"{cred}@{netloc}"

    path = _remove_dot_segments(parts.path) or "/"
    while path.endswith("//"):
        path = path[:-1]

    return urlunsplit((scheme, netloc, path, parts.query, ""))


def canonicalize(url: str) -> str:
    """Canonical form of an already-absolute URL."""
    return normalize_url(url, "")


def host_of(url: str) -> str:
    return urlsplit(url).hostname or ""


def registered_domain(host: str) -> str:
    """Crude registered-domain heuristic: the last two labels.

    Good enough for scoping traversals; no public-suffix list dependency.
    """
    labels = host.lower().rstrip(".").split(".")
    return ".".join(labels[-2:]) if len(labels) >= 2 else host.lower()


def same_page(a: str, b: str) -> bool:
    """Equality up to a trailing slash, on canonical URLs."""
    return a.rstrip("/") == b.rstrip("/")


@dataclass(frozen=True)
class ScopeRule:
    """Which URLs a run may touch.

    mode: "same_host" (default), "same_domain", or "allow_list".
    """

    mode: str = "same_host"
    root_host: str = ""
    allowed_hosts: frozenset[str] = field(default_factory=frozenset)

    @classmethod
    def for_root(cls, root_url: str, mode: str = "same_host",
                 allowed_hosts: tuple[str, ...] = ()) -> "ScopeRule":
        if mode not in ("same_host", "same_domain", "allow_list"):
            raise ValueError(f"unknown scope mode {mode!r}")
        host = host_of(canonicalize(root_url))
        extra = frozenset(h.lower() for h in allowed_hosts)
        return cls(mode=mode, root_host=host, allowed_hosts=extra)

    def allows(self, url: str) -> bool:
        host = host_of(url).lower()
        if not host:
            return False
        if self.mode == "same_host":
            return host == self.root_host
        if self.mode == "same_domain":
            return registered_domain(host) == registered_domain(self.root_host)
        return host == self.root_host or host in self.allowed_hosts
