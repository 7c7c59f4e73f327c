"""LLM-as-judge grading: a chain-of-thought quiz-grading prompt whose reply
must end in a GRADE: CORRECT / GRADE: INCORRECT verdict."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .errors import GradeParseError
from .model_client import ChatMessage, GenerationParams, ModelBackend, complete

logger = logging.getLogger(__name__)

CORRECT = "correct"
INCORRECT = "incorrect"

JUDGE_SYSTEM = """You are a teacher grading a quiz.
You are given a question, the context the question is about, and the student's answer. You are asked to score the student's answer as either CORRECT or INCORRECT, based on the context.
Write out in a step by step manner your reasoning to be sure that your conclusion is correct. Avoid simply stating the correct answer at the outset.

Example Format:
QUESTION: question here
CONTEXT: context the question is about here
STUDENT ANSWER: student's answer here
EXPLANATION: step by step reasoning here
GRADE: CORRECT or INCORRECT here

Grade the student answers based ONLY on their factual accuracy. Ignore differences in punctuation and phrasing between the student answer and true answer. It is OK if the student answer contains more information than the true answer, as long as it does not contain any conflicting statements. Begin!"""


@dataclass(frozen=True)
class JudgeInput:
    question: str
    reference_answer: str
    predicted_answer: str

    def __post_init__(self):
        if not self.question or not self.reference_answer:
            raise ValueError("question and reference_answer must be non-empty")


@dataclass(frozen=True)
class JudgeOutput:
    grade: str  # CORRECT / INCORRECT constants
    explanation: str


def render_judge_prompt(judge_input: JudgeInput) -> list[ChatMessage]:
    """Fill the QUESTION/CONTEXT/STUDENT ANSWER slots; the reference answer
    goes into CONTEXT. The cue stops at EXPLANATION: so the model's reply
    carries the GRADE: marker that parsing relies on."""
    user = (
        f"QUESTION: {judge_input.question}\n"
        f"CONTEXT: {judge_input.reference_answer}\n"
        f"STUDENT ANSWER: {judge_input.predicted_answer}\n"
        "EXPLANATION:"
    )
    return [ChatMessage("system", JUDGE_SYSTEM), ChatMessage("user", user)]


_GRADE_MARKER_RE = re.compile(r"GRADE\s*:", re.IGNORECASE)
_GRADE_TOKEN_RE = re.compile(r"\s*\**\s*([A-Za-z]+)")


def parse_grade(text: str) -> str:
    """Decide from the last GRADE: marker; the following token must read
    CORRECT or INCORRECT (case-insensitive)."""
    markers = list(_GRADE_MARKER_RE.finditer(text or ""))
    if not markers:
        raise GradeParseError("no GRADE: marker in reply")
    token_match = _GRADE_TOKEN_RE.match(text, markers[-1].end())
    if token_match is None:
        raise GradeParseError("no grade token after the last GRADE: marker")
    token = token_match.group(1).lower()
    if token == CORRECT:
        return CORRECT
    if token == INCORRECT:
        return INCORRECT
    raise GradeParseError(f"unrecognized grade token {token!r}")


def judge(judge_input: JudgeInput, backend: ModelBackend,
          params: GenerationParams | None = None) -> JudgeOutput:
    """Render, complete, parse; one re-ask on an unparseable grade."""
    params = params or GenerationParams()
    messages = render_judge_prompt(judge_input)
    reply = complete(messages, params, backend)
    try:
        grade = parse_grade(reply)
    except GradeParseError:
        logger.warning("judge reply had no usable grade; re-asking once")
        retry = messages + [
            ChatMessage("assistant", reply or "(empty)"),
            ChatMessage("user", 'Finish your grading now with a final line of the form "GRADE: CORRECT" or "GRADE: INCORRECT".'),
        ]
        reply = complete(retry, params, backend)
        grade = parse_grade(reply)
    return JudgeOutput(grade=grade, explanation=reply)
