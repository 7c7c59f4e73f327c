"""HTML parsing: clickable-button extraction and markdown rendering.

Built on the stdlib tolerant parser, so malformed markup degrades gracefully
instead of failing. Both entry points take decoded text; ``decode_body``
handles the bytes-to-text step and is the only place ParseFailure can arise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from html.parser import HTMLParser

from .errors import MalformedReference, ParseFailure
from .urls import ScopeRule, normalize_url

# Elements whose content never reaches the markdown rendering.
_BOILERPLATE = {"script", "style", "noscript", "template", "nav", "footer", "head", "svg", "iframe"}

# Void elements have no closing tag; they must not affect skip tracking.
_VOID = {"area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "track", "wbr"}

_HEADINGS = {"h1": 1, "h2": 2, "h3": 3, "h4": 4, "h5": 5, "h6": 6}
_BLOCK_BREAKERS = {"p", "div", "section", "article", "main", "header", "aside", "figure", "blockquote"}


@dataclass(frozen=True)
class Button:
    """One clickable link as shown to the agent.

    ordinal is the 0-based position within its page after filtering;
    target is the canonical absolute URL.
    """

    ordinal: int
    text: str
    target: str


def decode_body(body: bytes, content_type: str = "") -> str:
    """Decode page bytes to text, honoring a charset parameter when present."""
    if b"\x00" in body:
        raise ParseFailure("body contains NUL bytes; not decodable text")
    charset = None
    match = re.search(r"charset=([\w\-]+)", content_type or "", re.IGNORECASE)
    if match:
        charset = match.group(1)
    for encoding in filter(None, (charset, "utf-8")):
        try:
            return body.decode(encoding)
        except (LookupError, UnicodeDecodeError):
            continue
    return body.decode("latin-1")


def _squash(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


class _AnchorCollector(HTMLParser):
    """Collects (href, text, title) triples for <a>/<area> in document order."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.found: list[tuple[str, str, str]] = []
        self._href: str | None = None
        self._title = ""
        self._text: list[str] = []

    def _finish(self) -> None:
        if self._href is not None:
            self.found.append((self._href, _squash("".join(self._text)), self._title))
        self._href = None
        self._title = ""
        self._text = []

    def handle_starttag(self, tag, attrs):
        attr = dict(attrs)
        if tag in ("a", "area"):
            self._finish()  # malformed nesting: close any open anchor
            href = attr.get("href")
            if href is not None:
                self._href = href
                self._title = attr.get("title") or ""
                if tag == "area":
                    self._text.append(attr.get("alt") or "")
                    self._finish()
        elif tag == "img" and self._href is not None:
            alt = attr.get("alt")
            if alt:
                self._text.append(f" {alt} ")

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag == "a":
            self._finish()

    def handle_endtag(self, tag):
        if tag == "a":
            self._finish()

    def handle_data(self, data):
        if self._href is not None:
            self._text.append(data)

    def close(self):
        super().close()
        self._finish()


def extract_buttons(html: str, base_url: str, scope: ScopeRule) -> list[Button]:
    """Clickable buttons of a page: in-scope anchors with non-empty text.

    Resolves hrefs against ``base_url``, drops fragment-only and non-http(s)
    links, deduplicates by target (first occurrence wins), and keeps document
    order. Ordinals are contiguous from 0 over the surviving buttons.
    """
    collector = _AnchorCollector()
    collector.feed(html)
    collector.close()

    buttons: list[Button] = []
    seen: set[str] = set()
    for href, text, title in collector.found:
        if href.strip().startswith("#"):
            continue
        try:
            target = normalize_url(base_url, href)
        except MalformedReference:
            continue
        if not scope.allows(target):
            continue
        if target in seen:
            continue
        label = text or _squash(title)
        if not label:
            continue
        seen.add(target)
        buttons.append(Button(ordinal=len(buttons), text=label, target=target))
    return buttons


class _TitleCollector(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self._in_title = False
        self.title = ""

    def handle_starttag(self, tag, attrs):
        if tag == "title" and not self.title:
            self._in_title = True

    def handle_endtag(self, tag):
        if tag == "title":
            self._in_title = False

    def handle_data(self, data):
        if self._in_title:
            self.title += data


def page_title(html: str) -> str:
    collector = _TitleCollector()
    collector.feed(html)
    collector.close()
    return _squash(collector.title)


class _MarkdownRenderer(HTMLParser):
    """Linear HTML-to-markdown conversion.

    Headings, paragraphs, lists, tables, emphasis, inline code, and links
    survive; boilerplate containers are dropped wholesale. Skipping tracks
    the boilerplate elements themselves rather than raw tag depth, which
    keeps unclosed tags inside them from derailing the parse.
    """

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.blocks: list[str] = []
        self._inline: list[str] = []
        self._pending_marker: str | None = None
        self._skip_stack: list[str] = []
        self._pre_depth = 0
        self._heading: int | None = None
        self._list_stack: list[str] = []      # "ul" / "ol"
        self._ol_counters: list[int] = []
        self._href: str | None = None
        self._link_text: list[str] = []
        # table state
        self._table_rows: list[list[str]] | None = None
        self._row: list[str] | None = None
        self._cell: list[str] | None = None
        self._header_row = False

    # -- block assembly -------------------------------------------------

    def _close_block(self, prefix: str = "") -> None:
        text = _squash("".join(self._inline))
        self._inline = []
        marker = self._pending_marker
        self._pending_marker = None
        if text:
            self.blocks.append((prefix or marker or "") + text)

    def _emit(self, text: str) -> None:
        if self._cell is not None:
            self._cell.append(text)
        elif self._href is not None:
            self._link_text.append(text)
        else:
            self._inline.append(text)

    def _marker(self) -> str:
        depth = max(len(self._list_stack) - 1, 0)
        indent = "  " * depth
        if self._list_stack and self._list_stack[-1] == "ol":
            self._ol_counters[-1] += 1
            return f"{indent}{self._ol_counters[-1]}. "
        return f"{indent}- "

    # -- parser hooks -----------------------------------------------------

    def handle_starttag(self, tag, attrs):
        if tag in _BOILERPLATE:
            self._skip_stack.append(tag)
            return
        if self._skip_stack:
            return
        attr = dict(attrs)
        if tag in _HEADINGS:
            self._close_block()
            self._heading = _HEADINGS[tag]
        elif tag == "pre":
            self._close_block()
            self._pre_depth += 1
        elif tag in ("ul", "ol"):
            self._close_block()
            self._list_stack.append(tag)
            if tag == "ol":
                self._ol_counters.append(0)
        elif tag == "li":
            self._close_block()
            self._pending_marker = self._marker()
        elif tag == "table":
            self._close_block()
            self._table_rows = []
        elif tag == "tr" and self._table_rows is not None:
            self._row = []
        elif tag in ("td", "th") and self._row is not None:
            self._cell = []
            if tag == "th":
                self._header_row = True
        elif tag == "br":
            self._emit(" ")
        elif tag == "hr":
            self._close_block()
            self.blocks.append("---")
        elif tag in ("strong", "b"):
            self._emit("**")
        elif tag in ("em", "i"):
            self._emit("*")
        elif tag == "code" and not self._pre_depth:
            self._emit("`")
        elif tag == "a":
            href = attr.get("href")
            if href and not href.startswith("#") and self._cell is None:
                self._href = href
                self._link_text = []
        elif tag == "img":
            alt = attr.get("alt")
            if alt:
                self._emit(alt)
        elif tag in _BLOCK_BREAKERS:
            self._close_block()

    def handle_startendtag(self, tag, attrs):
        if tag in _VOID:
            self.handle_starttag(tag, attrs)
        # self-closed non-void tags (e.g. <script/>) have no content to skip

    def handle_endtag(self, tag):
        if self._skip_stack:
            if tag in _BOILERPLATE and tag in self._skip_stack:
                while self._skip_stack and self._skip_stack.pop() != tag:
                    pass
            return
        if tag in _HEADINGS:
            level = self._heading or _HEADINGS[tag]
            self._close_block("#" * level + " ")
            self._heading = None
        elif tag == "pre":
            if self._pre_depth:
                self._pre_depth -= 1
                code = "".join(self._inline).strip("\n")
                self._inline = []
                if code:
                    self.blocks.append(f"```\n{code}\n```")
        elif tag in ("ul", "ol"):
            self._close_block()
            if self._list_stack:
                popped = self._list_stack.pop()
                if popped == "ol" and self._ol_counters:
                    self._ol_counters.pop()
        elif tag == "li":
            self._close_block()
        elif tag == "table":
            self._finish_table()
        elif tag == "tr":
            if self._row is not None and self._table_rows is not None:
                self._table_rows.append(self._row)
            self._row = None
        elif tag in ("td", "th"):
            if self._cell is not None and self._row is not None:
                self._row.append(_squash("".join(self._cell)))
            self._cell = None
        elif tag in ("strong", "b"):
            self._emit("**")
        elif tag in ("em", "i"):
            self._emit("*")
        elif tag == "code" and not self._pre_depth:
            self._emit("`")
        elif tag == "a":
            if self._href is not None:
                text = _squash("".join(self._link_text))
                if text:
                    self._inline.append(f"[{text}]({self._href})")
                self._href = None
                self._link_text = []
        elif tag in _BLOCK_BREAKERS:
            self._close_block()

    def handle_data(self, data):
        if self._skip_stack:
            return
        if self._pre_depth:
            self._inline.append(data)
        else:
            self._emit(data)

    # -- table rendering ----------------------------------------------------

    def _finish_table(self) -> None:
        rows = self._table_rows or []
        self._table_rows = None
        rows = [r for r in rows if r]
        header_present = self._header_row
        self._header_row = False
        if not rows:
            return
        width = max(len(r) for r in rows)
        rows = [r + [""] * (width - len(r)) for r in rows]
        if header_present:
            header, data = rows[0], rows[1:]
        else:
            header, data = [""] * width, rows
        lines = ["| " + " | ".join(header) + " |",
                 "| " + " | ".join(["---"] * width) + " |"]
        for row in data:
            lines.append("| " + " | ".join(row) + " |")
        self.blocks.append("\n".join(lines))

    def result(self) -> str:
        self._close_block()
        text = "\n\n".join(self.blocks)
        text = re.sub(r"\n{3,}", "\n\n", text)
        return text.strip()


def to_markdown(html: str) -> str:
    """Render page HTML as markdown; deterministic for identical input."""
    renderer = _MarkdownRenderer()
    renderer.feed(html)
    renderer.close()
    return renderer.result()
