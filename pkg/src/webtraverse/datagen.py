"""Dataset construction: recursive crawl with depth labels, LLM question
synthesis over crawled pages, strict-judge verification, and export of a
review queue for human annotators."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from .bench import MULTI_SOURCE, SINGLE_SOURCE, DepthLabel, difficulty_of
from .errors import FetchError, InvalidReply, NoJsonFound, SublinkNotSupplied
from .model_client import ChatMessage, GenerationParams, ModelBackend, as_bool, complete_json
from .urls import ScopeRule, canonicalize, same_page
from .webenv import Fetcher, build_page

logger = logging.getLogger(__name__)

PAGE_INFO_CAP = 4000  # characters of page markdown handed to the generator


@dataclass(frozen=True)
class SitePageRecord:
    url: str
    depth: int          # root page is depth 1
    parent_url: str | None
    title: str
    markdown: str

    def to_json_dict(self) -> dict:
        return {"url": self.url, "depth": self.depth, "parent_url": self.parent_url,
                "title": self.title, "markdown": self.markdown}


@dataclass(frozen=True)
class SyntheticQA:
    query: str
    answer: str
    sublinks: tuple[str, ...]
    sublink_reason: str
    reason: str
    kind: str                       # "single" | "multi"
    sublink_depths: tuple[int, ...]
    root_url: str

    def __post_init__(self):
        expected = 2 if self.kind == "multi" else 1
        if len(self.sublinks) != expected:
            raise InvalidReply(
                f"{self.kind} QA must cite exactly {expected} sublink(s), got {len(self.sublinks)}"
            )


@dataclass(frozen=True)
class VerificationVerdict:
    decision: bool
    reason: str


def crawl_site(root_url: str, max_depth: int, *, env: Fetcher,
               max_pages: int = 500, parallelism: int = 4,
               scope: ScopeRule | None = None) -> list[SitePageRecord]:
    """Breadth-first crawl within scope, recording each page at its minimal
    depth. Individual fetch failures are skipped with a log line; only a
    failing root is fatal. Output is sorted by (depth, discovery order)."""
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    root = canonicalize(root_url)
    if scope is None:
        scope = ScopeRule.for_root(root, env.policy.scope_mode)

    records: list[SitePageRecord] = []
    visited: set[str] = set()

    def fetch_one(url: str):
        try:
            raw = env.fetch(url, scope)
        except FetchError as exc:
            logger.warning("skipping %s: %s", url, exc)
            return None
        return raw

    raw_root = env.fetch(root, scope)  # root failures propagate
    level = [(root, None, raw_root)]
    depth = 1
    while level and len(records) < max_pages:
        next_frontier: list[tuple[str, str]] = []
        for url, parent, raw in level:
            if raw is None:
                continue
            final = canonicalize(raw.final_url)
            if final in visited:
                continue
            visited.update({final, canonicalize(url)})
            page = build_page(raw, scope)
            records.append(SitePageRecord(
                url=final, depth=depth, parent_url=parent,
                title=page.title, markdown=page.markdown,
            ))
            if len(records) >= max_pages:
                break
            if depth < max_depth:
                for button in page.buttons:
                    if button.target not in visited:
                        next_frontier.append((button.target, final))
        if depth >= max_depth or len(records) >= max_pages:
            break
        # de-duplicate the next level, keeping first-discovered parents
        seen_next: set[str] = set()
        unique_next = []
        for url, parent in next_frontier:
            if url not in seen_next and url not in visited:
                seen_next.add(url)
                unique_next.append((url, parent))
        budget = max_pages - len(records)
        unique_next = unique_next[:budget]
        with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
            raws = list(pool.map(lambda pair: fetch_one(pair[0]), unique_next))
        level = [(url, parent, raw) for (url, parent), raw in zip(unique_next, raws)]
        depth += 1
    return records


def save_crawl(records: list[SitePageRecord], path: str | Path) -> None:
    Path(path).write_text(
        "".join(json.dumps(r.to_json_dict(), ensure_ascii=False) + "\n" for r in records),
        "utf-8",
    )


# --------------------------------------------------------------------------
# question synthesis
# --------------------------------------------------------------------------

MULTI_GEN_SYSTEM = """You are a professional web content analyst. Based on the provided material, construct a query statement:
Sublink 1 URL; Sublink 1 INFO
Sublink 2 URL; Sublink 2 INFO
...
Sublink n URL; Sublink n INFO
### Requirements:
1. **Core Goal of the Query**: Create a multi-step standalone query where the user needs to integrate information from at least two sublinks to find the final answer. The answer should be a single, clear, concise, and precise entity.
2. **Relevance of Sublinks**: The selected sublinks must have an intrinsic connection, and the answer should be derived by combining information from these two sublinks.
3. **Logical and Complex**: The constructed query should be as complex and specific as possible, challenging, and can leverage time, sequence, or commonly mentioned topics to construct a naturally coherent reasoning process. Avoid questions about browsing history, browsing paths, etc., which have no practical value.
4. **Accuracy of the Answer**: Ensure the answer is accurate, concise, and closely connected to the logical chain constructed in the query.

Please return in JSON format, structured as follows:
{
    "sublink_reason": "Describe why these specific sublinks were chosen and how they are interrelated.",
    "sublinks": ["Selected sublink URL", "Selected sublink URL"],
    "reason": "Explain the reason for designing this query and how it encourages the user to engage in multi-step reasoning.",
    "query": "Your query statement",
    "answer": "The answer to the query"
}"""

# Single-page variant: adapted from the multi-source prompt (the original
# single-source generation prompt is not published), so this wording is ours.
SINGLE_GEN_SYSTEM = """You are a professional web content analyst. Based on the provided material, construct a query statement:
Sublink 1 URL; Sublink 1 INFO
### Requirements:
1. **Core Goal of the Query**: Create a standalone query answerable from this single page. The answer should be a single, clear, concise, and precise entity.
2. **Logical and Complex**: The constructed query should be specific and challenging, and can leverage time, sequence, or commonly mentioned topics. Avoid questions about browsing history, browsing paths, etc., which have no practical value.
3. **Accuracy of the Answer**: Ensure the answer is accurate, concise, and closely connected to the page content.

Please return in JSON format, structured as follows:
{
    "sublink_reason": "Describe why this sublink was chosen.",
    "sublinks": ["Selected sublink URL"],
    "reason": "Explain the reason for designing this query.",
    "query": "Your query statement",
    "answer": "The answer to the query"
}"""

VERIFY_MULTI_SYSTEM = """You will act as a strict judge. You need to evaluate whether the given query can be accurately answered only by combining the information from two documents (doc1 and doc2) and the provided answer. Additionally, check if the answer is concise (as an entity or a judgment) and correct.

If the answer is incorrect, can be answered using only one document, or is not concise enough, you should return false.
If any document (doc1 or doc2) does not contain the necessary key information for the answer and only provides context for the query, you should return false.
If any document merely provides query background information unrelated to the answer and does not require combining information from both documents, you should return false.
If the answer is a long answer and not of an entity type, you should return false.
If the query is unnatural, doesn't appear as a complete query, or has a harsh tone, you should return false.
Each question should require combining information from both documents, meaning the answer results from multi-hop reasoning or multi-step reasoning, and it is concise for you to return true.
You are very strict, and any case failing to meet the above criteria should result in a false. Please return your result in JSON format as follows:
{
    "reason": "Consider each of the conditions above in sequence to assess whether the query and answer meet the criteria. If they do meet the criteria, list the helpful parts from each doc for answering the question.",
    "decision": "true/false"
}"""

VERIFY_SINGLE_SYSTEM = """You will act as a strict judge. You need to assess whether current knowledge from doc2 is required to accurately answer the given query based on the two provided documents (doc1 and doc2) and the given answer. Doc1 represents known knowledge, while doc2 represents current knowledge. Your task is to determine if the answer relies on doc2 to be accurately provided. Additionally, evaluate whether the answer is short (an entity or judgment) and correct.

If the answer is incorrect or not concise, return false.
If the necessary key information is found in the known knowledge doc1, also return false.
If the answer is a long answer and not of entity type, return false.
If the query is unnatural, not a complete query, or awkwardly phrased, return false.
The answer should result from multi-hop reasoning or multi-step reasoning, where multi-step reasoning indicates that the generated query is challenging and requires reasoning or calculation to answer, and only if the answer is concise should you return true.
You are extremely strict, and any requirements not met should result in a return of false.

Please return the result in JSON format as follows:
{
    "reason": "Evaluate against the above conditions step by step, considering whether the query and answer meet the conditions. Use English to justify, and if they do, list the sections from doc2 that assist in answering the query.",
    "decision": "true/false"
}"""


def _page_info(page: SitePageRecord) -> str:
    return page.markdown[:PAGE_INFO_CAP]


def _resolve_cited(cited: list, pages: list[SitePageRecord], index: int) -> SitePageRecord:
    if not isinstance(cited, str):
        raise InvalidReply(f"sublink {index} is not a URL string")
    for page in pages:
        if same_page(page.url, cited.strip()):
            return page
    raise SublinkNotSupplied(f"generator cited {cited!r}, not among the supplied pages")


def generate_multi_source(pages: list[SitePageRecord], backend: ModelBackend,
                          reasks: int = 1) -> SyntheticQA:
    """Synthesize one multi-source QA over the supplied pages; the cited
    sublinks must be a subset of them."""
    if len(pages) < 2:
        raise ValueError("multi-source generation needs at least two pages")
    user = "\n".join(
        f"Sublink {i + 1} URL: {p.url}; Sublink {i + 1} INFO: {_page_info(p)}"
        for i, p in enumerate(pages)
    )
    obj = complete_json([ChatMessage("system", MULTI_GEN_SYSTEM), ChatMessage("user", user)],
                        GenerationParams(), backend, reasks=reasks)
    cited = obj.get("sublinks")
    if not isinstance(cited, list) or len(cited) != 2:
        raise InvalidReply(f"expected 2 sublinks, got {cited!r}")
    resolved = [_resolve_cited(c, pages, i + 1) for i, c in enumerate(cited)]
    return SyntheticQA(
        query=str(obj.get("query") or "").strip(),
        answer=str(obj.get("answer") or "").strip(),
        sublinks=tuple(p.url for p in resolved),
        sublink_reason=str(obj.get("sublink_reason") or ""),
        reason=str(obj.get("reason") or ""),
        kind="multi",
        sublink_depths=tuple(p.depth for p in resolved),
        root_url=_root_of(pages),
    )


def generate_single_source(page: SitePageRecord, backend: ModelBackend,
                           reasks: int = 1) -> SyntheticQA:
    """Synthesize one single-source QA focused on a solo page."""
    user = f"Sublink 1 URL: {page.url}; Sublink 1 INFO: {_page_info(page)}"
    obj = complete_json([ChatMessage("system", SINGLE_GEN_SYSTEM), ChatMessage("user", user)],
                        GenerationParams(), backend, reasks=reasks)
    cited = obj.get("sublinks")
    if not isinstance(cited, list) or len(cited) != 1:
        raise InvalidReply(f"expected 1 sublink, got {cited!r}")
    resolved = _resolve_cited(cited[0], [page], 1)
    return SyntheticQA(
        query=str(obj.get("query") or "").strip(),
        answer=str(obj.get("answer") or "").strip(),
        sublinks=(resolved.url,),
        sublink_reason=str(obj.get("sublink_reason") or ""),
        reason=str(obj.get("reason") or ""),
        kind="single",
        sublink_depths=(page.depth,),
        root_url=_root_of([page]),
    )


def _root_of(pages: list[SitePageRecord]) -> str:
    for page in pages:
        if page.depth == 1:
            return page.url
    # derive the site root from any page
    url = pages[0].url
    scheme, rest = url.split("://", 1)
    return f"{scheme}://{rest.split('/', 1)[0]}/"


def verify_qa(qa: SyntheticQA, docs: list[str], backend: ModelBackend,
              reasks: int = 1) -> VerificationVerdict:
    """Strict-judge filter; unusable replies fail conservatively (false)."""
    if len(docs) != len(qa.sublinks):
        raise ValueError("one document per cited sublink is required")
    system = VERIFY_MULTI_SYSTEM if qa.kind == "multi" else VERIFY_SINGLE_SYSTEM
    doc_lines = "; ".join(f"Doc{i + 1} INFO: {doc[:PAGE_INFO_CAP]}" for i, doc in enumerate(docs))
    user = f"Query: {qa.query}\nAnswer: {qa.answer}\n{doc_lines}"
    try:
        obj = complete_json([ChatMessage("system", system), ChatMessage("user", user)],
                            GenerationParams(), backend, reasks=reasks)
        decision = as_bool(obj["decision"]) if "decision" in obj else False
        reason = str(obj.get("reason") or "").strip() or "(no reason given)"
    except (NoJsonFound, InvalidReply) as exc:
        logger.warning("verification reply unusable (%s); filtering the QA out", exc)
        return VerificationVerdict(decision=False, reason=f"unusable verifier reply: {exc}")
    return VerificationVerdict(decision=decision, reason=reason)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

def depth_label_of(qa: SyntheticQA) -> DepthLabel:
    if qa.kind == "multi":
        return DepthLabel(MULTI_SOURCE, sum(qa.sublink_depths))
    return DepthLabel(SINGLE_SOURCE, qa.sublink_depths[0])


def _golden_path(url: str) -> str:
    path = url.split("://", 1)[-1]
    segments = [s for s in path.split("/")[1:] if s]
    return "->".join(["root", *segments]) if segments else "root"


def export_review_queue(qas: list[SyntheticQA], out_path: str | Path, *,
                        domain: str = "Organization",
                        language: str = "English") -> int:
    """Write verified QAs as dataset-shaped records plus a review_status
    field (always "pending"); returns the record count."""
    lines = []
    for qa in qas:
        label = depth_label_of(qa)
        record = {
            "Question": qa.query,
            "Answer": qa.answer,
            "Root_Url": qa.root_url,
            "Info": {
                "Hop": "multi-source" if qa.kind == "multi" else "single-source",
                "Domain": domain,
                "Language": language,
                "Difficulty_Level": difficulty_of(label),
                "Source_Website": list(qa.sublinks),
                "Golden_Path": [_golden_path(u) for u in qa.sublinks],
            },
            "review_status": "pending",
        }
        lines.append(json.dumps(record, ensure_ascii=False) + "\n")
    Path(out_path).write_text("".join(lines), "utf-8")
    return len(lines)


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

def run_pipeline(root_url: str, *, env: Fetcher, generator: ModelBackend,
                 verifier: ModelBackend | None = None,
                 max_depth: int = 4, max_pages: int = 500,
                 singles: int = 2, multis: int = 2,
                 out_crawl: str | Path | None = None,
                 out_queue: str | Path | None = None,
                 domain: str = "Organization",
                 language: str = "English") -> tuple[list[SitePageRecord], list[SyntheticQA]]:
    """Crawl, synthesize, verify, export. Returns (crawl records, passing QAs)."""
    verifier = verifier or generator
    records = crawl_site(root_url, max_depth, env=env, max_pages=max_pages)
    if out_crawl:
        save_crawl(records, out_crawl)
    by_url = {r.url: r for r in records}
    deep = [r for r in records if r.depth >= 2]

    passing: list[SyntheticQA] = []
    for page in deep[:singles]:
        try:
            qa = generate_single_source(page, generator)
        except (NoJsonFound, InvalidReply, SublinkNotSupplied) as exc:
            logger.warning("single-source generation failed for %s: %s", page.url, exc)
            continue
        verdict = verify_qa(qa, [by_url[u].markdown for u in qa.sublinks], verifier)
        if verdict.decision:
            passing.append(qa)
    for first, second in list(combinations(deep, 2))[:multis]:
        try:
            qa = generate_multi_source([first, second], generator)
        except (NoJsonFound, InvalidReply, SublinkNotSupplied) as exc:
            logger.warning("multi-source generation failed: %s", exc)
            continue
        verdict = verify_qa(qa, [by_url[u].markdown for u in qa.sublinks], verifier)
        if verdict.decision:
            passing.append(qa)
    if out_queue:
        export_review_queue(passing, out_queue, domain=domain, language=language)
    return records, passing
