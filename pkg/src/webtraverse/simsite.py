"""Deterministic synthetic websites with facts planted at known depths.

These sites are the offline oracle environment: every page carries a unique
reference code, questions are synthesized against those codes, and a
brute-force search over click sequences provides ground-truth minimum click
counts, independent of the agent implementation.
"""

from __future__ import annotations

import json
import random
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .bench import MULTI_SOURCE, SINGLE_SOURCE, BenchmarkItem, DepthLabel, difficulty_of
from .errors import DepthUnavailable
from .webenv import InMemoryTransport

_TOPICS = [
    "Admissions", "Research", "Faculty", "Library", "Events", "Grants",
    "Alumni", "Programs", "Facilities", "Partnerships", "Workshops",
    "Seminars", "Archives", "Resources", "Governance", "Outreach",
    "Laboratories", "Fellowships", "Courses", "Publications", "Networks",
    "Projects", "Services", "Committees", "Exhibits", "Initiatives",
]

_QUALIFIERS = [
    "Overview", "Details", "Directory", "Calendar", "Handbook", "Guide",
    "Registry", "Bulletin", "Portal", "Index", "Notes", "Records",
]


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


@dataclass
class SiteNode:
    path: str                 # absolute URL path, ends with "/"
    title: str
    paragraphs: list[str]
    code: str                 # this page's unique reference code
    code_sentence: str
    planted_facts: list[tuple[str, str]] = field(default_factory=list)
    children: list["SiteNode"] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "path": self.path,
            "title": self.title,
            "paragraphs": self.paragraphs,
            "code": self.code,
            "code_sentence": self.code_sentence,
            "planted_facts": [list(f) for f in self.planted_facts],
            "children": [c.to_json_dict() for c in self.children],
        }

    @classmethod
    def from_json_dict(cls, record: dict) -> "SiteNode":
        return cls(
            path=record["path"], title=record["title"],
            paragraphs=list(record["paragraphs"]), code=record["code"],
            code_sentence=record["code_sentence"],
            planted_facts=[tuple(f) for f in record["planted_facts"]],
            children=[cls.from_json_dict(c) for c in record["children"]],
        )


@dataclass
class SiteSpec:
    seed: int
    host: str
    depth: int
    branching: int
    root: SiteNode

    @property
    def root_url(self) -> str:
        return f"https://{self.host}/"

    def url_of(self, node: SiteNode) -> str:
        return f"https://{self.host}{node.path}"

    def walk(self):
        """Yield (node, depth, parent) in level order; the root has depth 1."""
        queue = deque([(self.root, 1, None)])
        while queue:
            node, depth, parent = queue.popleft()
            yield node, depth, parent
            for child in node.children:
                queue.append((child, depth + 1, node))

    def nodes_at(self, depth: int) -> list[SiteNode]:
        return [n for n, d, _ in self.walk() if d == depth]

    def node_by_url(self, url: str) -> SiteNode | None:
        for node, _, _ in self.walk():
            if self.url_of(node) == url:
                return node
        return None

    def to_json(self) -> str:
        return json.dumps({
            "seed": self.seed, "host": self.host, "depth": self.depth,
            "branching": self.branching, "root": self.root.to_json_dict(),
        }, ensure_ascii=False, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SiteSpec":
        record = json.loads(text)
        return cls(
            seed=record["seed"], host=record["host"], depth=record["depth"],
            branching=record["branching"], root=SiteNode.from_json_dict(record["root"]),
        )


def generate_site(seed: int, depth: int, branching: int, facts: int = 0) -> SiteSpec:
    """A complete ``branching``-ary tree of pages, ``depth`` levels deep.

    Fully deterministic in the arguments. Every non-root page body contains
    one unique reference-code sentence; the optional ``facts`` extra fact
    sentences are planted in distinct deepest-level pages only.
    """
    if depth < 1 or branching < 1:
        raise ValueError("depth and branching must be >= 1")
    rng = random.Random(seed)
    host = f"site-{seed}.example.test"
    counter = 0

    def make_node(title: str, path: str, level: int) -> SiteNode:
        nonlocal counter
        code = f"{rng.choice(_TOPICS)[:3].upper()}-{100 + counter}"
        counter += 1
        sentence = f"The reference code for this page is {code}."
        node = SiteNode(
            path=path, title=title,
            paragraphs=[], code=code, code_sentence=sentence,
        )
        if level < depth:
            picks = rng.sample(_TOPICS, branching)
            for pick in picks:
                qualifier = rng.choice(_QUALIFIERS)
                child_title = f"{pick} {qualifier}"
                child_path = f"{path}{_slug(child_title)}-{counter}/"
                node.children.append(make_node(child_title, child_path, level + 1))
        intro = f"Welcome to the {title} page of {host}."
        body = [intro]
        if node.children:
            names = ", ".join(c.title for c in node.children)
            body.append(f"Use the links below to reach our sections: {names}.")
        else:
            body.append("This page has no further subsections.")
        if level > 1:
            body.append(sentence)
        node.paragraphs = body
        return node

    root = make_node("Home", "/", 1)
    spec = SiteSpec(seed=seed, host=host, depth=depth, branching=branching, root=root)

    leaves = spec.nodes_at(depth)
    if facts > len(leaves):
        raise ValueError(f"cannot plant {facts} facts in {len(leaves)} leaf pages")
    for i in range(facts):
        fact_id = f"fact-{i}"
        value = f"VAULT-{rng.randint(1000, 9999)}-{i}"
        sentence = f"The archive locator for record {i} is {value}."
        leaves[i].planted_facts.append((fact_id, sentence))
        leaves[i].paragraphs.append(sentence)
    return spec


def render_html(node: SiteNode) -> str:
    """Valid HTML for one page: body paragraphs plus one anchor per child."""
    parts = [
        "<!DOCTYPE html>",
        "<html><head>",
        f"<title>{node.title}</title>",
        "</head><body>",
        f"<h1>{node.title}</h1>",
    ]
    parts.extend(f"<p>{p}</p>" for p in node.paragraphs)
    if node.children:
        parts.append("<ul>")
        parts.extend(
            f'<li><a href="{child.path}">{child.title}</a></li>' for child in node.children
        )
        parts.append("</ul>")
    parts.append("</body></html>")
    return "\n".join(parts)


def mount(spec: SiteSpec, transport: InMemoryTransport | None = None) -> InMemoryTransport:
    """Serve the rendered site through the in-memory transport. Passing an
    existing transport mounts several sites side by side."""
    transport = transport or InMemoryTransport()
    for node, _, _ in spec.walk():
        transport.add(spec.url_of(node), render_html(node))
    return transport


def materialize(spec: SiteSpec, directory: str | Path) -> int:
    """Write the site as static index.html files; returns the page count."""
    base = Path(directory)
    count = 0
    for node, _, _ in spec.walk():
        page_dir = base / node.path.lstrip("/")
        page_dir.mkdir(parents=True, exist_ok=True)
        (page_dir / "index.html").write_text(render_html(node), "utf-8")
        count += 1
    return count


# --------------------------------------------------------------------------
# planted QAs and the click-sequence oracle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PlantedQA:
    item: BenchmarkItem
    fact_depths: tuple[int, ...]
    min_clicks: int
    target_urls: tuple[str, ...]


def _children_map(spec: SiteSpec) -> dict[str, tuple[str, ...]]:
    return {
        spec.url_of(node): tuple(spec.url_of(c) for c in node.children)
        for node, _, _ in spec.walk()
    }


def min_clicks_required(spec: SiteSpec, targets: set[str],
                        frontier_mode: str = "global_frontier",
                        max_clicks: int = 16) -> int | None:
    """Brute-force breadth-first search over click sequences.

    States carry the visited set (global-frontier moves are any observed,
    unvisited button; current-page moves only the current page's children).
    Returns the minimum number of clicks after which all targets have been
    visited, or None if unreachable within ``max_clicks``.
    """
    sequence = optimal_click_sequence(spec, targets, frontier_mode, max_clicks)
    return None if sequence is None else len(sequence)


def optimal_click_sequence(spec: SiteSpec, targets: set[str],
                           frontier_mode: str = "global_frontier",
                           max_clicks: int = 16) -> list[str] | None:
    """One shortest click sequence visiting all targets.

    Moves are expanded in sorted URL order so the chosen sequence is
    deterministic regardless of hash randomization.
    """
    children = _children_map(spec)
    root = spec.root_url
    if not targets - {root}:
        return []

    start_visited = frozenset([root])
    queue: deque = deque([(start_visited, root, [])])
    seen = {(start_visited, root if frontier_mode == "current_page_only" else None)}
    while queue:
        visited, current, path = queue.popleft()
        if len(path) >= max_clicks:
            continue
        if frontier_mode == "current_page_only":
            moves = [u for u in children.get(current, ()) if u not in visited]
        else:
            moves = sorted(
                u for page in visited for u in children.get(page, ()) if u not in visited
            )
        for move in moves:
            new_visited = visited | {move}
            new_path = path + [move]
            if targets <= new_visited:
                return new_path
            key = (new_visited, move if frontier_mode == "current_page_only" else None)
            if key not in seen:
                seen.add(key)
                queue.append((new_visited, move, new_path))
    return None


def _branch_root_index(spec: SiteSpec, node: SiteNode) -> int | None:
    """Which top-level branch a node lives under (None for the root)."""
    for index, child in enumerate(spec.root.children):
        prefix = child.path
        if node.path.startswith(prefix):
            return index
    return None


def plant_qa(spec: SiteSpec, kind: str, target_depths: list[int],
             domain: str = "Organization", language: str = "English",
             frontier_mode: str = "global_frontier") -> PlantedQA:
    """Build a benchmark item whose answer is the reference code(s) of pages
    at the requested depths.

    Multi-source picks the two pages on different top-level branches so that
    answering genuinely requires both (and, under the global frontier,
    jumping back across branches).
    """
    if kind == "single":
        if len(target_depths) != 1:
            raise ValueError("single kind takes exactly one depth")
        (depth,) = target_depths
        if not 2 <= depth <= spec.depth:
            raise DepthUnavailable(f"no page at depth {depth} on a depth-{spec.depth} site")
        node = spec.nodes_at(depth)[0]
        question = (f'What is the reference code shown on the "{node.title}" page '
                    f"of {spec.host}?")
        answer = node.code
        nodes = [node]
        # the difficulty taxonomy tops out at depth 4; deeper plants are Hard
        label = DepthLabel(SINGLE_SOURCE, min(depth, 4))
        hop = "single-source"
    elif kind == "multi":
        if len(target_depths) != 2:
            raise ValueError("multi kind takes exactly two depths")
        d1, d2 = target_depths
        for d in (d1, d2):
            if not 2 <= d <= spec.depth:
                raise DepthUnavailable(f"no page at depth {d} on a depth-{spec.depth} site")
        if len(spec.root.children) < 2:
            raise DepthUnavailable("multi-source planting needs at least two branches")
        first = next(n for n in spec.nodes_at(d1) if _branch_root_index(spec, n) == 0)
        second = next(n for n in spec.nodes_at(d2) if _branch_root_index(spec, n) == 1)
        question = (f'What are the reference codes shown on the "{first.title}" and '
                    f'"{second.title}" pages of {spec.host}?')
        answer = f"{first.code} and {second.code}"
        nodes = [first, second]
        label = DepthLabel(MULTI_SOURCE, min(d1 + d2, 8))
        hop = "multi-source"
    else:
        raise ValueError(f"unknown kind {kind!r}")

    urls = tuple(spec.url_of(n) for n in nodes)
    golden = tuple("root->" + "->".join(s for s in n.path.strip("/").split("/") if s)
                   for n in nodes)
    clicks = min_clicks_required(spec, set(urls), frontier_mode)
    if clicks is None:
        raise DepthUnavailable(f"targets unreachable under {frontier_mode}")
    item = BenchmarkItem(
        question=question, answer=answer, root_url=spec.root_url,
        hop=hop, domain=domain, language=language,
        difficulty_level=difficulty_of(label),
        source_websites=urls, golden_path=golden,
    )
    return PlantedQA(item=item, fact_depths=tuple(target_depths),
                     min_clicks=clicks, target_urls=urls)


def oracle_scripts(spec: SiteSpec, qa: PlantedQA,
                   frontier_mode: str = "global_frontier") -> tuple[list[str], list[str]]:
    """Scripted explorer and critic reply queues for a perfect policy.

    The explorer clicks one shortest sequence from the brute-force search;
    the critic marks exactly the target pages useful and judges sufficiency
    once all targets have been seen.
    """
    sequence = optimal_click_sequence(spec, set(qa.target_urls), frontier_mode)
    if sequence is None:
        raise DepthUnavailable("no click sequence reaches the planted pages")
    explorer: list[str] = []
    critic: list[str] = []
    seen: set[str] = set()
    for url in sequence:
        explorer.append(
            f"Thought: the page at {url} looks most promising next.\n"
            f"Action: visit_page\nAction Input: {url}"
        )
        seen.add(url)
        if url in qa.target_urls:
            node = spec.node_by_url(url)
            critic.append(json.dumps({"usefulness": True, "information": node.code_sentence}))
        else:
            critic.append(json.dumps({"usefulness": False}))
        if set(qa.target_urls) <= seen:
            critic.append(json.dumps({"judge": True, "answer": qa.item.answer}))
        else:
            critic.append(json.dumps({"judge": False}))
    return explorer, critic
