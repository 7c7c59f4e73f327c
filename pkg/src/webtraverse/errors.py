"""Exception types shared across the package."""

from __future__ import annotations


class TraversalError(Exception):
    """Base class for all webtraverse errors."""


# --- URL / scope ---

class MalformedReference(TraversalError):
    """A link could not be resolved to an absolute http(s) URL."""


class ScopeViolation(TraversalError):
    """A URL falls outside the configured traversal scope."""


# --- fetching ---

class FetchError(TraversalError):
    """Base class for transport-level fetch failures."""


class Timeout(FetchError):
    pass


class TransportFailure(FetchError):
    """Connection-level failure, or retries exhausted."""


class HttpError(FetchError):
    def __init__(self, status: int, url: str = ""):
        super().__init__(f"HTTP {status} for {url}" if url else f"HTTP {status}")
        self.status = status
        self.url = url


class NonHtmlContent(FetchError):
    """The response body is not an HTML media type."""


class RobotsDisallowed(FetchError):
    """robots.txt forbids fetching this URL."""


class ParseFailure(TraversalError):
    """Page bytes are not decodable as text."""


# --- model access ---

class ModelError(TraversalError):
    pass


class EmptyCompletion(ModelError):
    pass


class ScriptExhausted(ModelError):
    """A scripted backend ran out of replies."""


class NoJsonFound(ModelError):
    """No balanced JSON object could be parsed out of a model reply."""


class InvalidReply(ModelError):
    """A reply parsed as JSON but did not match the expected shape."""


# --- agent loop ---

class FormatViolation(TraversalError):
    """Explorer output does not follow the Thought/Action/Action Input grammar."""


class UnknownTarget(TraversalError):
    """Action input matches no button the explorer has been shown."""


class AmbiguousTarget(TraversalError):
    """Action input matches more than one candidate button."""


class AlreadyVisited(TraversalError):
    """Action input points at a page already visited in this run."""


# --- judging ---

class GradeParseError(TraversalError):
    """No usable GRADE marker in a judge reply."""


# --- benchmark data ---

class SchemaError(TraversalError):
    def __init__(self, index: int, key: str, message: str):
        super().__init__(f"record {index}: {key}: {message}")
        self.index = index
        self.key = key


class InvalidLabel(TraversalError):
    """Depth label outside the defined ranges."""


# --- retrieval ---

class RetrieverUnavailable(TraversalError):
    pass


# --- dataset generation ---

class SublinkNotSupplied(TraversalError):
    """Generator cited a URL that was not among the supplied pages."""


class DepthUnavailable(TraversalError):
    """Requested plant depth exceeds the site depth or has no free branch."""


# --- configuration ---

class ConfigError(TraversalError):
    pass
