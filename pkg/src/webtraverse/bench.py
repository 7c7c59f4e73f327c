"""Benchmark dataset model, runner, metrics, and error taxonomy.

Dataset records use the wire schema: top-level Question / Answer / Root_Url /
Info, with Info holding Hop, Domain, Language, Difficulty_Level,
Source_Website, and Golden_Path.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .agent_core import (
    ANSWERED,
    POLICY_REACT,
    STEP_LIMIT,
    Memory,
    Query,
    RunBackends,
    RunConfig,
    RunResult,
    run_query,
    run_react_baseline,
)
from .errors import GradeParseError, InvalidLabel, SchemaError, TraversalError
from .judge import CORRECT, INCORRECT, JudgeInput, judge
from .model_client import ModelBackend
from .urls import canonicalize, same_page
from .webenv import Fetcher

logger = logging.getLogger(__name__)

HOPS = ("single-source", "multi-source")
DOMAINS = ("Conference", "Organization", "Education", "Game")
LANGUAGES = ("English", "Chinese")
DIFFICULTIES = ("Easy", "Medium", "Hard")

UNGRADED = "ungraded"

# error categories for non-correct records
ERROR_STEP_LIMIT = "step_limit_exceeded"
ERROR_REASONING = "reasoning_error"
ERROR_REFUSAL_OR_LOCATION = "refusal_or_wrong_location"


@dataclass(frozen=True)
class BenchmarkItem:
    question: str
    answer: str
    root_url: str
    hop: str
    domain: str
    language: str
    difficulty_level: str
    source_websites: tuple[str, ...]
    golden_path: tuple[str, ...]

    @property
    def item_id(self) -> str:
        digest = hashlib.sha1(f"{self.question}\n{self.root_url}".encode("utf-8")).hexdigest()
        return digest[:12]

    def to_json_dict(self) -> dict:
        return {
            "Question": self.question,
            "Answer": self.answer,
            "Root_Url": self.root_url,
            "Info": {
                "Hop": self.hop,
                "Domain": self.domain,
                "Language": self.language,
                "Difficulty_Level": self.difficulty_level,
                "Source_Website": list(self.source_websites),
                "Golden_Path": list(self.golden_path),
            },
        }


def _item_from_json(record: dict, index: int) -> BenchmarkItem:
    def need(mapping: dict, key: str, where: str = "") -> object:
        if key not in mapping:
            raise SchemaError(index, (where + key) if where else key, "missing key")
        return mapping[key]

    if not isinstance(record, dict):
        raise SchemaError(index, "<record>", "not a JSON object")
    question = need(record, "Question")
    answer = need(record, "Answer")
    root_url = need(record, "Root_Url")
    info = need(record, "Info")
    if not isinstance(info, dict):
        raise SchemaError(index, "Info", "not a JSON object")
    hop = need(info, "Hop", "Info.")
    domain = need(info, "Domain", "Info.")
    language = need(info, "Language", "Info.")
    difficulty = need(info, "Difficulty_Level", "Info.")
    sources = need(info, "Source_Website", "Info.")
    golden = need(info, "Golden_Path", "Info.")

    for key, value in (("Question", question), ("Answer", answer), ("Root_Url", root_url)):
        if not isinstance(value, str) or not value.strip():
            raise SchemaError(index, key, "must be a non-empty string")
    if hop not in HOPS:
        raise SchemaError(index, "Info.Hop", f"{hop!r} not in {list(HOPS)}")
    if domain not in DOMAINS:
        raise SchemaError(index, "Info.Domain", f"{domain!r} not in {list(DOMAINS)}")
    if language not in LANGUAGES:
        raise SchemaError(index, "Info.Language", f"{language!r} not in {list(LANGUAGES)}")
    if difficulty not in DIFFICULTIES:
        raise SchemaError(index, "Info.Difficulty_Level", f"{difficulty!r} not in {list(DIFFICULTIES)}")
    if not isinstance(sources, list) or not all(isinstance(u, str) for u in sources):
        raise SchemaError(index, "Info.Source_Website", "must be a list of URLs")
    if not isinstance(golden, list) or not all(isinstance(p, str) for p in golden):
        raise SchemaError(index, "Info.Golden_Path", "must be a list of path strings")
    if hop == "single-source" and len(sources) != 1:
        raise SchemaError(index, "Info.Source_Website",
                          f"single-source requires exactly 1 source website, got {len(sources)}")
    if hop == "multi-source" and len(sources) < 2:
        raise SchemaError(index, "Info.Source_Website",
                          f"multi-source requires at least 2 source websites, got {len(sources)}")
    return BenchmarkItem(
        question=question, answer=answer, root_url=root_url,
        hop=hop, domain=domain, language=language, difficulty_level=difficulty,
        source_websites=tuple(sources), golden_path=tuple(golden),
    )


def load_dataset(path: str | Path) -> list[BenchmarkItem]:
    """Parse a dataset file: a JSON array or one JSON object per line.

    Validates every record's invariants and preserves input order. Unknown
    extra keys (e.g. a review_status added by the generation pipeline) are
    tolerated.
    """
    text = Path(path).read_text("utf-8").strip()
    if not text:
        return []
    if text.startswith("["):
        records = json.loads(text)
    else:
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
    return [_item_from_json(record, index) for index, record in enumerate(records)]


def save_dataset(items: Iterable[BenchmarkItem], path: str | Path, jsonl: bool = True) -> None:
    records = [item.to_json_dict() for item in items]
    out = Path(path)
    if jsonl:
        out.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records), "utf-8")
    else:
        out.write_text(json.dumps(records, ensure_ascii=False, indent=2), "utf-8")


# --------------------------------------------------------------------------
# depth labels and difficulty
# --------------------------------------------------------------------------

SINGLE_SOURCE = "single_source"
MULTI_SOURCE = "multi_source"


@dataclass(frozen=True)
class DepthLabel:
    """single_source_i (i = subpage depth, 2..4) or multi_source_i
    (i = sum of the two subpage depths, 2..8)."""

    kind: str
    index: int

    def __str__(self) -> str:
        return f"{self.kind}_{self.index}"

    @classmethod
    def parse(cls, text: str) -> "DepthLabel":
        for kind in (SINGLE_SOURCE, MULTI_SOURCE):
            prefix = kind + "_"
            if text.startswith(prefix):
                try:
                    return cls(kind, int(text[len(prefix):]))
                except ValueError:
                    break
        raise InvalidLabel(f"unparseable depth label {text!r}")


def difficulty_of(label: DepthLabel) -> str:
    """Map a depth label to Easy / Medium / Hard.

    Single-source: 2 -> Easy, 3 -> Medium, 4 -> Hard. Multi-source ranges
    overlap at their boundaries in the source taxonomy; this partition
    resolves them as Easy 2-4, Medium 5-6, Hard 7-8.
    """
    if label.kind == SINGLE_SOURCE:
        mapping = {2: "Easy", 3: "Medium", 4: "Hard"}
        if label.index not in mapping:
            raise InvalidLabel(f"single_source index {label.index} outside 2..4")
        return mapping[label.index]
    if label.kind == MULTI_SOURCE:
        if not 2 <= label.index <= 8:
            raise InvalidLabel(f"multi_source index {label.index} outside 2..8")
        if label.index <= 4:
            return "Easy"
        if label.index <= 6:
            return "Medium"
        return "Hard"
    raise InvalidLabel(f"unknown label kind {label.kind!r}")


# --------------------------------------------------------------------------
# result records
# --------------------------------------------------------------------------

@dataclass
class ResultRecord:
    item_id: str
    index: int
    hop: str
    difficulty: str
    domain: str
    language: str
    outcome: str
    answer: str | None
    action_count: int
    visited: list[str]
    grade: str  # CORRECT / INCORRECT / UNGRADED
    error_category: str | None
    judge_explanation: str = ""
    memory: list[dict] = field(default_factory=list)
    wall_clock_ms: int = 0
    model_calls: int = 0
    prompt_chars: int = 0
    reply_chars: int = 0

    def to_json_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "index": self.index,
            "hop": self.hop,
            "difficulty": self.difficulty,
            "domain": self.domain,
            "language": self.language,
            "outcome": self.outcome,
            "answer": self.answer,
            "action_count": self.action_count,
            "visited": self.visited,
            "grade": self.grade,
            "error_category": self.error_category,
            "judge_explanation": self.judge_explanation,
            "memory": self.memory,
            "wall_clock_ms": self.wall_clock_ms,
            "model_calls": self.model_calls,
            "prompt_chars": self.prompt_chars,
            "reply_chars": self.reply_chars,
        }

    @classmethod
    def from_json_dict(cls, record: dict) -> "ResultRecord":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in record.items() if k in known})


def classify_error(record: ResultRecord, item: BenchmarkItem) -> str:
    """Error taxonomy for non-correct records.

    Precedence: reaching the step budget, then a reasoning error (some golden
    page was visited yet the answer was still wrong), then refusal or wrong
    location.
    """
    if record.outcome == STEP_LIMIT:
        return ERROR_STEP_LIMIT
    visited = [canonicalize(u) for u in record.visited]
    for source in item.source_websites:
        try:
            golden = canonicalize(source)
        except TraversalError:
            continue
        if any(same_page(golden, v) for v in visited):
            return ERROR_REASONING
    return ERROR_REFUSAL_OR_LOCATION


# --------------------------------------------------------------------------
# runner
# --------------------------------------------------------------------------

BackendFactory = Callable[[BenchmarkItem], RunBackends]


def run_item(item: BenchmarkItem, index: int, config: RunConfig, backends: RunBackends,
             env: Fetcher, judge_backend: ModelBackend | None) -> ResultRecord:
    """Execute one benchmark item: traverse, grade, classify."""
    query = Query(question=item.question, root_url=item.root_url)
    runner = run_react_baseline if config.policy == POLICY_REACT else run_query
    try:
        run: RunResult = runner(query, config, backends, env)
    except Exception as exc:  # defensive: a crashed run must not kill the batch
        logger.exception("run for item %s crashed", item.item_id)
        run = RunResult(outcome="aborted", answer=None, action_count=0, visited=[],
                        memory=Memory(), trajectory=None, transcript=[], error=str(exc))
    grade = UNGRADED
    explanation = ""
    if run.outcome == ANSWERED and judge_backend is not None:
        try:
            verdict = judge(JudgeInput(item.question, item.answer, run.answer or ""), judge_backend)
            grade = verdict.grade
            explanation = verdict.explanation
        except (GradeParseError, TraversalError) as exc:
            logger.warning("judging failed for item %s: %s", item.item_id, exc)
            grade = UNGRADED

    record = ResultRecord(
        item_id=item.item_id, index=index,
        hop=item.hop, difficulty=item.difficulty_level,
        domain=item.domain, language=item.language,
        outcome=run.outcome, answer=run.answer, action_count=run.action_count,
        visited=list(run.visited), grade=grade, error_category=None,
        judge_explanation=explanation,
        memory=[{"step_index": e.step_index, "information": e.information,
                 "source_url": e.source_url} for e in run.memory.entries],
        wall_clock_ms=run.wall_clock_ms, model_calls=run.model_calls,
        prompt_chars=run.prompt_chars, reply_chars=run.reply_chars,
    )
    if record.grade != CORRECT:
        record.error_category = classify_error(record, item)
    return record


def run_benchmark(items: list[BenchmarkItem], config: RunConfig, *,
                  backend_factory: BackendFactory, env: Fetcher,
                  judge_backend: ModelBackend | None = None,
                  concurrency: int = 1,
                  out_path: str | Path | None = None,
                  resume: bool = False) -> list[ResultRecord]:
    """Run every item, up to ``concurrency`` at a time.

    Individual failures become aborted records, never batch failures. With
    ``resume``, items whose ids already appear in ``out_path`` are skipped.
    The output file is rewritten in item order on completion; progress lines
    are appended as runs finish so a crash loses nothing.
    """
    if not items:
        raise ValueError("items must be non-empty")
    out_file = Path(out_path) if out_path else None
    done: dict[int, ResultRecord] = {}
    if resume and out_file and out_file.exists():
        leftovers: dict[str, list[ResultRecord]] = {}
        for line in out_file.read_text("utf-8").splitlines():
            if line.strip():
                record = ResultRecord.from_json_dict(json.loads(line))
                leftovers.setdefault(record.item_id, []).append(record)
        for index, item in enumerate(items):
            queue = leftovers.get(item.item_id)
            if queue:
                done[index] = queue.pop(0)

    pending = [(i, item) for i, item in enumerate(items) if i not in done]
    write_lock = threading.Lock()

    def execute(indexed: tuple[int, BenchmarkItem]) -> tuple[int, ResultRecord]:
        index, item = indexed
        record = run_item(item, index, config, backend_factory(item), env, judge_backend)
        if out_file:
            with write_lock, out_file.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_json_dict(), ensure_ascii=False) + "\n")
        return index, record

    if pending:
        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            for index, record in pool.map(execute, pending):
                done[index] = record

    ordered = []
    for index in sorted(done):
        done[index].index = index
        ordered.append(done[index])
    if out_file:
        with write_lock:
            out_file.write_text(
                "".join(json.dumps(r.to_json_dict(), ensure_ascii=False) + "\n" for r in ordered),
                "utf-8",
            )
    return ordered


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupMetrics:
    n: int
    correct: int
    accuracy: float
    mean_action_count: float | None


@dataclass(frozen=True)
class MetricsReport:
    n: int
    correct: int
    accuracy: float
    mean_action_count: float | None  # over correct runs only; None when none correct
    by_hop_difficulty: dict[str, GroupMetrics]
    by_domain: dict[str, GroupMetrics]
    by_language: dict[str, GroupMetrics]
    error_histogram: dict[str, int]

    def to_json_dict(self) -> dict:
        def groups(mapping: dict[str, GroupMetrics]) -> dict:
            return {
                key: {
                    "n": g.n, "correct": g.correct, "accuracy": g.accuracy,
                    "mean_action_count": g.mean_action_count,
                }
                for key, g in mapping.items()
            }
        return {
            "n": self.n,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "mean_action_count": self.mean_action_count,
            "by_hop_difficulty": groups(self.by_hop_difficulty),
            "by_domain": groups(self.by_domain),
            "by_language": groups(self.by_language),
            "error_histogram": dict(self.error_histogram),
        }


def _group(records: list[ResultRecord]) -> GroupMetrics:
    n = len(records)
    correct = [r for r in records if r.grade == CORRECT]
    mean_ac = sum(r.action_count for r in correct) / len(correct) if correct else None
    return GroupMetrics(
        n=n, correct=len(correct),
        accuracy=(len(correct) / n) if n else 0.0,
        mean_action_count=mean_ac,
    )


def compute_metrics(records: list[ResultRecord]) -> MetricsReport:
    """Accuracy over all records; action count averaged over correct runs
    only, reported absent (None) when nothing was correct."""
    def breakdown(key: Callable[[ResultRecord], str]) -> dict[str, GroupMetrics]:
        buckets: dict[str, list[ResultRecord]] = {}
        for record in records:
            buckets.setdefault(key(record), []).append(record)
        return {k: _group(v) for k, v in sorted(buckets.items())}

    histogram: dict[str, int] = {}
    for record in records:
        if record.error_category:
            histogram[record.error_category] = histogram.get(record.error_category, 0) + 1

    overall = _group(records)
    return MetricsReport(
        n=overall.n, correct=overall.correct, accuracy=overall.accuracy,
        mean_action_count=overall.mean_action_count,
        by_hop_difficulty=breakdown(lambda r: f"{r.hop}/{r.difficulty}"),
        by_domain=breakdown(lambda r: r.domain),
        by_language=breakdown(lambda r: r.language),
        error_histogram=histogram,
    )


def render_metrics_table(report: MetricsReport) -> str:
    """Human-readable grid: hop x difficulty cells of acc / action count."""
    lines = []
    header = f"{'':<16}" + "".join(f"{d:>18}" for d in DIFFICULTIES) + f"{'Overall':>18}"
    lines.append(header)

    def cell(g: GroupMetrics | None) -> str:
        if g is None or g.n == 0:
            return f"{'-':>18}"
        ac = f"{g.mean_action_count:.2f}" if g.mean_action_count is not None else "-"
        return f"{100 * g.accuracy:>10.2f} / {ac:>5}"

    for hop in HOPS:
        row = f"{hop:<16}"
        for difficulty in DIFFICULTIES:
            row += cell(report.by_hop_difficulty.get(f"{hop}/{difficulty}"))
        row += f"{'':>18}"
        lines.append(row)
    overall_ac = f"{report.mean_action_count:.2f}" if report.mean_action_count is not None else "-"
    lines.append(f"overall: acc {100 * report.accuracy:.2f} / A.C. {overall_ac} (n={report.n})")
    if report.error_histogram:
        lines.append("errors: " + ", ".join(f"{k}={v}" for k, v in sorted(report.error_histogram.items())))
    for title, groups in (("domain", report.by_domain), ("language", report.by_language)):
        if groups:
            parts = [f"{k}: {100 * g.accuracy:.1f}% (n={g.n})" for k, g in groups.items()]
            lines.append(f"{title}: " + ", ".join(parts))
    return "\n".join(lines)
