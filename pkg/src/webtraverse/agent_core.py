"""The explorer-critic loop.

One run: fetch the root page, then repeat {explorer picks a button, the page
is fetched and observed, the critic extracts useful information into memory
and decides whether it can answer} until the critic answers or the click
budget K runs out. A single-agent ReAct variant (no critic, explicit
final_answer tool) is provided as a baseline.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field

from .errors import (
    AlreadyVisited,
    AmbiguousTarget,
    FetchError,
    FormatViolation,
    InvalidReply,
    ModelError,
    NoJsonFound,
    TransportFailure,
    UnknownTarget,
)
from .htmlview import Button
from .model_client import (
    ChatMessage,
    GenerationParams,
    ModelBackend,
    as_bool,
    complete,
    complete_json,
)
from .urls import ScopeRule, canonicalize, same_page
from .webenv import Fetcher, Observation, ObservationLimits, Page, build_observation, build_page

logger = logging.getLogger(__name__)

# run outcome kinds
ANSWERED = "answered"
STEP_LIMIT = "step_limit_exceeded"
REFUSED = "refused"
ABORTED = "aborted"

POLICY_WEBWALKER = "webwalker"
POLICY_REACT = "react_baseline"

GLOBAL_FRONTIER = "global_frontier"
CURRENT_PAGE_ONLY = "current_page_only"

TRUNCATION_NOTICE = "[page content truncated at the character cap]"

TOOL_DESCRIPTIONS = {
    "visit_page": (
        "visit_page: open one of the listed clickable buttons and observe that page. "
        "Action Input must be the exact URL of a listed button (its [number] or exact text also work)."
    ),
    "final_answer": (
        "final_answer: finish the task. Action Input is your final answer to the question."
    ),
}

EXPLORER_PREAMBLE = """Digging through the buttons to find quailty sources and the right information. You have access to the following tools:

{tool_descs}

Use the following format:

Question: the input question you must answer
Thought: you should always think about what to do
Action: the action to take, should be one of [{tool_names}]
Action Input: the input to the action
Observation: the result of the action
... (this Thought/Action/Action Input/Observation can be repeated zero or more times)

Begin!"""

CRITIC_OBSERVE_SYSTEM = """You are a critic agent. Your task is to analyze the given observation and extract information relevant to the current query. You need to decide if the observation contains useful information for the query. If it does, return a JSON object with a "usefulness" value of true and an "information" field with the relevant details. If not, return a JSON object with a "usefulness" value of false.
**Input:**
    - Query: "<Query>"
    - Observation: "<Current Observation>"
**Output (JSON):**
{
  "usefulness": true,
  "information": "<Extracted Useful Information>"
}
Or, if the observation does not contain useful information:
{
  "usefulness": false
}"""

CRITIC_ANSWER_SYSTEM = """You are a critic agent. Your task is to evaluate whether the accumulated useful information is sufficient to answer the current query. If it is sufficient, return a JSON object with a "judge" value of true and an "answer" field with the answer.
If the information is insufficient, return a JSON object with a "judge" value of false.
**Input:**
    - Query: "<Query>"
    - Accumulated Information: "<Accumulated Useful Information>"
**Output (JSON):**
{
    "judge": true,
    "answer": "<Generated Answer>"
}
Or, if the information is insufficient to answer the query:
{
    "judge": false
}"""


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Query:
    question: str
    root_url: str

    def __post_init__(self):
        if not self.question or not self.root_url:
            raise ValueError("question and root_url must be non-empty")


@dataclass(frozen=True)
class Action:
    """A resolved click: the chosen button plus the raw model input."""

    target: str
    button_text: str
    raw_action_input: str


@dataclass(frozen=True)
class StepRecord:
    index: int
    thought: str
    action: Action
    observation: Observation


@dataclass
class Trajectory:
    """Run state: executed steps, visited URLs, and the frontier of observed,
    unvisited buttons in observation order (oldest first)."""

    root_observation: Observation
    steps: list[StepRecord] = field(default_factory=list)
    visited: dict[str, None] = field(default_factory=dict)
    frontier: dict[str, Button] = field(default_factory=dict)

    def visited_set(self) -> set[str]:
        return set(self.visited)

    def absorb(self, observation: Observation) -> None:
        for button in observation.frontier_view:
            self.frontier.setdefault(button.target, button)

    def mark_visited(self, *urls: str) -> None:
        for url in urls:
            self.visited.setdefault(url, None)
            self.frontier.pop(url, None)


@dataclass(frozen=True)
class MemoryEntry:
    step_index: int
    information: str
    source_url: str


@dataclass
class Memory:
    """The critic's append-only store of extracted information."""

    entries: list[MemoryEntry] = field(default_factory=list)

    def append(self, entry: MemoryEntry) -> None:
        self.entries.append(entry)

    def render(self) -> str:
        if not self.entries:
            return "(none yet)"
        return "\n".join(
            f"[step {e.step_index} | {e.source_url}] {e.information}" for e in self.entries
        )


@dataclass(frozen=True)
class CriticObservationVerdict:
    usefulness: bool
    information: str = ""


@dataclass(frozen=True)
class AnswerVerdict:
    judge: bool
    answer: str = ""


@dataclass(frozen=True)
class RunConfig:
    max_steps: int = 15
    policy: str = POLICY_WEBWALKER
    frontier_mode: str = GLOBAL_FRONTIER
    markdown_cap: int = 8000
    button_cap: int = 50
    count_root: bool = False
    explorer_reasks: int = 2
    critic_reasks: int = 1

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.policy not in (POLICY_WEBWALKER, POLICY_REACT):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.frontier_mode not in (GLOBAL_FRONTIER, CURRENT_PAGE_ONLY):
            raise ValueError(f"unknown frontier mode {self.frontier_mode!r}")

    def limits(self) -> ObservationLimits:
        return ObservationLimits(markdown_cap=self.markdown_cap, button_cap=self.button_cap)


@dataclass(frozen=True)
class RunBackends:
    explorer: ModelBackend
    critic: ModelBackend | None = None

    def critic_backend(self) -> ModelBackend:
        return self.critic if self.critic is not None else self.explorer


@dataclass
class RunResult:
    outcome: str
    answer: str | None
    action_count: int
    visited: list[str]
    memory: Memory
    trajectory: Trajectory
    transcript: list[dict]
    error: str | None = None
    wall_clock_ms: int = 0
    model_calls: int = 0
    prompt_chars: int = 0
    reply_chars: int = 0

    def to_json_dict(self, include_transcript: bool = False) -> dict:
        record = {
            "outcome": self.outcome,
            "answer": self.answer,
            "action_count": self.action_count,
            "visited": self.visited,
            "memory": [
                {"step_index": e.step_index, "information": e.information, "source_url": e.source_url}
                for e in self.memory.entries
            ],
            "error": self.error,
            "wall_clock_ms": self.wall_clock_ms,
            "model_calls": self.model_calls,
            "prompt_chars": self.prompt_chars,
            "reply_chars": self.reply_chars,
        }
        if include_transcript:
            record["transcript"] = self.transcript
        return record


@dataclass(frozen=True)
class ParsedReact:
    thought: str
    action: str
    action_input: str


# --------------------------------------------------------------------------
# prompt rendering and parsing
# --------------------------------------------------------------------------

def render_page_block(observation: Observation) -> str:
    page = observation.page
    lines = [f"URL: {page.url}", f"Title: {page.title or '(untitled)'}", ""]
    lines.append(page.markdown or "(empty page)")
    if page.truncated:
        lines.append(TRUNCATION_NOTICE)
    lines.append("Clickable buttons:")
    if observation.frontier_view:
        lines.extend(
            f"[{i}] {b.text} -> {b.target}" for i, b in enumerate(observation.frontier_view)
        )
    else:
        lines.append("(no unvisited buttons)")
    return "\n".join(lines)


def render_explorer_prompt(query: Query, trajectory: Trajectory, observation: Observation,
                           tools: tuple[str, ...] = ("visit_page",)) -> list[ChatMessage]:
    """ReAct prompt: tool/format preamble as the system message, the question
    plus serialized history as the user message ending in a Thought: cue."""
    system = EXPLORER_PREAMBLE.format(
        tool_descs="\n".join(TOOL_DESCRIPTIONS[t] for t in tools),
        tool_names=", ".join(tools),
    )
    parts = [f"Question: {query.question}", ""]
    parts.append(f"Start page {query.root_url}:")
    parts.append(render_page_block(trajectory.root_observation))
    for step in trajectory.steps:
        parts.append("")
        parts.append(f"Thought: {step.thought}")
        parts.append("Action: visit_page")
        parts.append(f"Action Input: {step.action.raw_action_input}")
        parts.append("Observation:")
        parts.append(render_page_block(step.observation))
    parts.append("")
    parts.append("Thought:")
    return [ChatMessage("system", system), ChatMessage("user", "\n".join(parts))]


_THOUGHT_RE = re.compile(r"Thought:\s*(.*?)(?=\n\s*(?:Action|Observation)\s*:|\Z)", re.DOTALL)
_ACTION_RE = re.compile(r"^\s*Action:\s*(.+?)\s*$", re.MULTILINE)
_INPUT_RE = re.compile(r"^\s*Action\s+Input:\s*(.*?)\s*$", re.MULTILINE)


def parse_react_output(text: str, tools: tuple[str, ...] = ("visit_page",)) -> ParsedReact:
    """Extract the first Thought block and Action/Action Input pair.

    The prompt ends with a "Thought:" cue, so a reply that starts with bare
    reasoning (no repeated label) is accepted; its text up to the Action line
    is the thought.
    """
    action_match = _ACTION_RE.search(text)
    if action_match is None:
        raise FormatViolation("missing Action: line")
    action = action_match.group(1).strip().strip("[]`'\"")
    if action not in tools:
        raise FormatViolation(f"unknown action {action!r}; expected one of {list(tools)}")

    thought_match = _THOUGHT_RE.search(text)
    thought = (thought_match.group(1) if thought_match else text[: action_match.start()]).strip()
    if not thought:
        raise FormatViolation("missing or empty Thought block")

    input_match = _INPUT_RE.search(text)
    if input_match is None:
        raise FormatViolation("missing Action Input: line")
    action_input = input_match.group(1).strip().strip("`'\"")
    return ParsedReact(thought=thought, action=action, action_input=action_input)


_ORDINAL_RE = re.compile(r"^\[?(\d+)\]?$")


def resolve_action(action_input: str, trajectory: Trajectory, frontier_mode: str,
                   latest_view: tuple[Button, ...]) -> Action:
    """Bind the explorer's Action Input to one observed, unvisited button.

    Match precedence: exact URL, then unique button text, then the [ordinal]
    shown in the latest observation. Pops the chosen button off the frontier.
    """
    if frontier_mode == CURRENT_PAGE_ONLY:
        candidates = [b for b in latest_view if b.target not in trajectory.visited]
    else:
        candidates = list(trajectory.frontier.values())

    raw = action_input.strip()
    # URL match (canonical, trailing-slash-insensitive)
    if raw.lower().startswith(("http://", "https://")):
        try:
            wanted = canonicalize(raw)
        except Exception:
            wanted = raw
        for button in candidates:
            if same_page(button.target, wanted):
                return _take(trajectory, button, raw)
        for url in trajectory.visited:
            if same_page(url, wanted):
                raise AlreadyVisited(f"{wanted} was already visited in this run")
        raise UnknownTarget(f"{wanted} is not among the observed buttons")

    # button-text match
    text_hits = [b for b in candidates if b.text.lower() == raw.lower()]
    if len(text_hits) > 1:
        raise AmbiguousTarget(f"{raw!r} matches {len(text_hits)} buttons")
    if len(text_hits) == 1:
        return _take(trajectory, text_hits[0], raw)

    # ordinal shown in the latest observation
    ordinal = _ORDINAL_RE.match(raw)
    if ordinal:
        index = int(ordinal.group(1))
        if 0 <= index < len(latest_view):
            button = latest_view[index]
            if button.target in trajectory.visited:
                raise AlreadyVisited(f"button [{index}] was already visited")
            return _take(trajectory, button, raw)
        raise UnknownTarget(f"button [{index}] is not in the latest observation")

    raise UnknownTarget(f"{raw!r} matches no observed button")


def _take(trajectory: Trajectory, button: Button, raw: str) -> Action:
    if button.target in trajectory.visited:
        raise AlreadyVisited(f"{button.target} was already visited in this run")
    trajectory.frontier.pop(button.target, None)
    return Action(target=button.target, button_text=button.text, raw_action_input=raw)


# --------------------------------------------------------------------------
# critic
# --------------------------------------------------------------------------

def render_critic_observe_prompt(query: Query, observation: Observation) -> list[ChatMessage]:
    page = observation.page
    rendered = f"URL: {page.url}\nTitle: {page.title or '(untitled)'}\n\n{page.markdown}"
    user = f"- Query: {query.question}\n- Observation: {rendered}"
    return [ChatMessage("system", CRITIC_OBSERVE_SYSTEM), ChatMessage("user", user)]


def render_critic_answer_prompt(query: Query, memory: Memory) -> list[ChatMessage]:
    user = f"- Query: {query.question}\n- Accumulated Information:\n{memory.render()}"
    return [ChatMessage("system", CRITIC_ANSWER_SYSTEM), ChatMessage("user", user)]


def critic_observe(query: Query, action: Action, observation: Observation, memory: Memory,
                   backend: ModelBackend, reasks: int = 1) -> CriticObservationVerdict:
    """Ask the critic whether the new observation helps; append to memory when
    it does. Malformed replies degrade to usefulness=false."""
    messages = render_critic_observe_prompt(query, observation)
    try:
        obj = complete_json(messages, GenerationParams(), backend, reasks=reasks)
        if "usefulness" not in obj:
            raise InvalidReply("reply JSON lacks 'usefulness'")
        usefulness = as_bool(obj["usefulness"])
        information = str(obj.get("information") or "").strip()
    except (NoJsonFound, InvalidReply) as exc:
        logger.warning("critic observation verdict unusable (%s); treating as not useful", exc)
        return CriticObservationVerdict(usefulness=False)
    if usefulness and not information:
        logger.warning("critic said useful but gave no information; treating as not useful")
        return CriticObservationVerdict(usefulness=False)
    if usefulness:
        # observations are numbered from 1 at the root, so the click index
        # behind this observation is step_index - 1
        memory.append(MemoryEntry(
            step_index=observation.step_index - 1,
            information=information,
            source_url=action.target,
        ))
        return CriticObservationVerdict(usefulness=True, information=information)
    return CriticObservationVerdict(usefulness=False)


def critic_answer(query: Query, memory: Memory, backend: ModelBackend,
                  reasks: int = 1) -> AnswerVerdict:
    """Ask the critic whether accumulated memory suffices to answer."""
    messages = render_critic_answer_prompt(query, memory)
    try:
        obj = complete_json(messages, GenerationParams(), backend, reasks=reasks)
        if "judge" not in obj:
            raise InvalidReply("reply JSON lacks 'judge'")
        judge = as_bool(obj["judge"])
        answer = str(obj.get("answer") or "").strip()
    except (NoJsonFound, InvalidReply) as exc:
        logger.warning("critic answer verdict unusable (%s); continuing exploration", exc)
        return AnswerVerdict(judge=False)
    if judge and not answer:
        logger.warning("critic judged sufficient but gave no answer; continuing")
        return AnswerVerdict(judge=False)
    return AnswerVerdict(judge=judge, answer=answer if judge else "")


# --------------------------------------------------------------------------
# instrumentation
# --------------------------------------------------------------------------

class _Recorder:
    """Wraps a backend to log every call into the run transcript."""

    def __init__(self, backend: ModelBackend, role: str, transcript: list[dict], tally: dict):
        self._backend = backend
        self._role = role
        self._transcript = transcript
        self._tally = tally

    def complete(self, messages: list[ChatMessage], params: GenerationParams) -> str:
        prompt_chars = sum(len(m.content) for m in messages)
        reply = self._backend.complete(messages, params)
        self._tally["model_calls"] += 1
        self._tally["prompt_chars"] += prompt_chars
        self._tally["reply_chars"] += len(reply)
        self._transcript.append({
            "role": self._role,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "reply": reply,
        })
        return reply


class _Refusal(Exception):
    pass


class _FinalAnswer(Exception):
    def __init__(self, text: str):
        super().__init__(text)
        self.text = text


# --------------------------------------------------------------------------
# the run loop
# --------------------------------------------------------------------------

_EXPLORER_PARAMS = GenerationParams(stop_sequences=("Observation:",))


def run_query(query: Query, config: RunConfig, backends: RunBackends, env: Fetcher,
              scope: ScopeRule | None = None) -> RunResult:
    """Explorer-critic traversal; see module docstring for the loop shape."""
    return _run(query, config, backends, env, scope, with_critic=True)


def run_react_baseline(query: Query, config: RunConfig, backends: RunBackends, env: Fetcher,
                       scope: ScopeRule | None = None) -> RunResult:
    """Single-agent ReAct baseline: no critic or memory; the explorer ends the
    run itself via the final_answer tool."""
    return _run(query, config, backends, env, scope, with_critic=False)


def _run(query: Query, config: RunConfig, backends: RunBackends, env: Fetcher,
         scope: ScopeRule | None, with_critic: bool) -> RunResult:
    started = time.monotonic()
    transcript: list[dict] = []
    tally = {"model_calls": 0, "prompt_chars": 0, "reply_chars": 0}
    explorer = _Recorder(backends.explorer, "explorer", transcript, tally)
    critic = _Recorder(backends.critic_backend(), "critic", transcript, tally)
    tools = ("visit_page",) if with_critic else ("visit_page", "final_answer")
    memory = Memory()

    if scope is None:
        scope = ScopeRule.for_root(query.root_url, env.policy.scope_mode)

    def finish(outcome: str, answer: str | None = None, error: str | None = None,
               trajectory: Trajectory | None = None, clicks: int = 0) -> RunResult:
        # the root fetch counts as an action only when configured and it happened
        action_count = clicks + (1 if config.count_root and trajectory is not None else 0)
        return RunResult(
            outcome=outcome, answer=answer,
            action_count=action_count,
            visited=list(trajectory.visited) if trajectory else [],
            memory=memory,
            trajectory=trajectory if trajectory is not None else _empty_trajectory(query),
            transcript=transcript, error=error,
            wall_clock_ms=int((time.monotonic() - started) * 1000),
            **tally,
        )

    try:
        root = canonicalize(query.root_url)
        raw = env.fetch(root, scope)
    except Exception as exc:  # root must be fetchable; anything else aborts
        return finish(ABORTED, error=f"root fetch failed: {exc}")

    root_page = build_page(raw, scope)
    root_obs = build_observation(
        root_page, {root, raw.final_url}, [], config.limits(), step_index=1,
        frontier_mode=config.frontier_mode,
    )
    trajectory = Trajectory(root_observation=root_obs)
    trajectory.mark_visited(root, raw.final_url)
    trajectory.absorb(root_obs)
    latest = root_obs
    clicks = 0

    try:
        while clicks < config.max_steps:
            if with_critic and not _has_candidates(trajectory, config.frontier_mode, latest):
                logger.info("frontier exhausted after %d clicks", clicks)
                return finish(STEP_LIMIT, trajectory=trajectory, clicks=clicks)

            try:
                thought, action = _explore_step(
                    query, trajectory, latest, explorer, tools, config)
            except _FinalAnswer as final:
                return finish(ANSWERED, answer=final.text, trajectory=trajectory, clicks=clicks)
            except _Refusal as refusal:
                return finish(REFUSED, error=str(refusal), trajectory=trajectory, clicks=clicks)

            clicks += 1
            page = _fetch_page(env, scope, action.target)
            trajectory.mark_visited(action.target, page.url)
            observation = build_observation(
                page, trajectory.visited_set(), list(trajectory.frontier.values()),
                config.limits(), step_index=clicks + 1, frontier_mode=config.frontier_mode,
            )
            trajectory.absorb(observation)
            trajectory.steps.append(StepRecord(
                index=clicks, thought=thought, action=action, observation=observation,
            ))
            latest = observation

            if with_critic:
                critic_observe(query, action, observation, memory, critic,
                               reasks=config.critic_reasks)
                verdict = critic_answer(query, memory, critic, reasks=config.critic_reasks)
                if verdict.judge:
                    return finish(ANSWERED, answer=verdict.answer,
                                  trajectory=trajectory, clicks=clicks)
        return finish(STEP_LIMIT, trajectory=trajectory, clicks=clicks)
    except (ModelError, TransportFailure) as exc:
        return finish(ABORTED, error=str(exc), trajectory=trajectory, clicks=clicks)


def _empty_trajectory(query: Query) -> Trajectory:
    empty_page = Page(url=query.root_url, title="", markdown="", buttons=())
    return Trajectory(root_observation=Observation(empty_page, (), 1))


def _has_candidates(trajectory: Trajectory, frontier_mode: str,
                    latest: Observation) -> bool:
    if frontier_mode == CURRENT_PAGE_ONLY:
        return any(b.target not in trajectory.visited for b in latest.frontier_view)
    return bool(trajectory.frontier)


def _explore_step(query: Query, trajectory: Trajectory, latest: Observation,
                  explorer: _Recorder, tools: tuple[str, ...],
                  config: RunConfig) -> tuple[str, Action]:
    """One explorer decision, with the bounded re-ask budget for format and
    target errors. Raises _FinalAnswer / _Refusal to unwind the loop."""
    convo = render_explorer_prompt(query, trajectory, latest, tools=tools)
    last_error: Exception | None = None
    for attempt in range(config.explorer_reasks + 1):
        reply = complete(convo, _EXPLORER_PARAMS, explorer)
        try:
            parsed = parse_react_output(reply, tools=tools)
            if parsed.action == "final_answer":
                raise _FinalAnswer(parsed.action_input)
            action = resolve_action(parsed.action_input, trajectory,
                                    config.frontier_mode, latest.frontier_view)
            return parsed.thought, action
        except (FormatViolation, UnknownTarget, AmbiguousTarget, AlreadyVisited) as exc:
            last_error = exc
            logger.info("explorer step rejected (%s), re-asking (%d/%d)",
                        exc, attempt + 1, config.explorer_reasks)
            convo = convo + [
                ChatMessage("assistant", reply or "(empty)"),
                ChatMessage("user", (
                    f"That was not a usable step: {exc}. "
                    "Reply again using the Thought/Action/Action Input format, "
                    "choosing one of the listed buttons."
                )),
            ]
    raise _Refusal(f"explorer failed after {config.explorer_reasks + 1} attempts: {last_error}")


def _fetch_page(env: Fetcher, scope: ScopeRule, target: str) -> Page:
    """Fetch a clicked target; a broken link becomes an error page rather than
    killing the run (the click is still spent)."""
    try:
        raw = env.fetch(target, scope)
    except FetchError as exc:
        logger.warning("click on %s failed: %s", target, exc)
        return Page(url=target, title="", markdown=f"[error] could not open page: {exc}", buttons=())
    return build_page(raw, scope)
