"""Prompt construction and reply parsing for the four pipeline roles.

Deterministic topic/difficulty sampling, byte-stable rendering of the task
generation, answer generation, task rating, and answer rating prompts, and
tolerant extraction of ``<rank>n</rank>`` judge replies.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

from .consensus import ContractViolation
from .streams import CountingStream


class ParseFailure(ValueError):
    """Judge reply carried no usable rank tag."""


TOPIC_NAMES = (
    "math",
    "current news",
    "creative writing",
    "logic",
    "grammar",
    "coding",
    "history",
    "general culture",
    "science",
    "technology",
)


@dataclass(frozen=True)
class Topic:
    name: str
    instruction_snippet: str

    def __post_init__(self) -> None:
        if self.name not in TOPIC_NAMES:
            raise ContractViolation(f"unknown topic {self.name!r}")
        if not self.instruction_snippet.strip():
            raise ContractViolation(f"topic {self.name!r} has an empty snippet")


@dataclass(frozen=True)
class DifficultyLabel:
    label: str
    probability: float


# Skewed toward hard tasks; sampled with fixed cut-points 0.6 / 0.9 on one
# uniform draw, so the sequence is a pure function of the stream.
DIFFICULTY_LEVELS = (
    DifficultyLabel("a very difficult", 0.6),
    DifficultyLabel("a difficult", 0.3),
    DifficultyLabel("a", 0.1),
)

_SNIPPET_RESOURCE = "topic_snippets.toml"


@lru_cache(maxsize=1)
def topics() -> tuple[Topic, ...]:
    """The ten topics in canonical order, snippets loaded from package data."""
    text = (
        resources.files("peerbench")
        .joinpath("data")
        .joinpath(_SNIPPET_RESOURCE)
        .read_text(encoding="utf-8")
    )
    table = tomllib.loads(text)
    missing = [name for name in TOPIC_NAMES if name not in table]
    if missing:
        raise ContractViolation(f"snippet file missing topics: {missing}")
    extra = [name for name in table if name not in TOPIC_NAMES]
    if extra:
        raise ContractViolation(f"snippet file has unknown topics: {extra}")
    return tuple(Topic(name, table[name]) for name in TOPIC_NAMES)


def topic_by_name(name: str) -> Topic:
    for topic in topics():
        if topic.name == name:
            return topic
    raise ContractViolation(f"unknown topic {name!r}")


def sample_difficulty(rng: CountingStream) -> DifficultyLabel:
    """One uniform draw: u < 0.6 hardest, u < 0.9 middle, else standard."""
    u = rng.uniform()
    if u < 0.6:
        return DIFFICULTY_LEVELS[0]
    if u < 0.9:
        return DIFFICULTY_LEVELS[1]
    return DIFFICULTY_LEVELS[2]


def sample_topic(rng: CountingStream) -> Topic:
    """One uniform draw over the ten topics."""
    return topics()[rng.index(len(TOPIC_NAMES))]


TASK_GENERATION_TEMPLATE = (
    "Generate {difficulty} question about {topic}. Keep the question clear, "
    "self-contained, and unambiguous.\n"
    "\n"
    "Requires analysis and multi-step reasoning; expect intermediate difficulty.\n"
    "\n"
    "{snippet}\n"
    "\n"
    "Return exactly the final question text only - do NOT include "
    "chain-of-thought, commentary, steps, or explanations.\n"
    "\n"
    "Do not surround the question with quotes or extraneous punctuation. "
    "Keep it concise and well-formed.\n"
    "\n"
    "If you are a thinking/reasoning model, ALWAYS ensure the final question "
    "appears in the standard 'content' field only; do NOT place it in "
    "'reasoning_content', do NOT leave the 'content' field empty once you "
    "finish reasoning."
)

ANSWER_GENERATION_TEMPLATE = (
    "Answer the question clearly, correctly, and concisely. Avoid "
    "hallucinations and speculative claims; include only facts you are "
    "confident about. Do NOT reveal chain-of-thought, internal reasoning "
    "steps, or chain-of-thought tags; output only the final answer. If you "
    "are a thinking/reasoning model, ALWAYS place the final answer in the "
    "standard 'content' field only; do NOT place it in 'reasoning_content', "
    "do NOT leave the 'content' field empty once you finish reasoning.\n"
    "\n"
    "Question: {question}\n"
    "\n"
    "Answer:"
)

TASK_RATING_TEMPLATE = (
    "Evaluate the quality of the question on an integer scale 1–5. "
    "Consider clarity, appropriateness for the stated difficulty, relevance "
    "to the topic, grammar/formulation, and engagement.\n"
    "\n"
    "Return ONLY the final score as XML exactly like this: <rank>n</rank> "
    "with no extra text. If you are a thinking/reasoning model, place the "
    "final <rank> tag in the 'content' field only; do not place it in "
    "'reasoning_content'.\n"
    "\n"
    "Question: {question}\n"
    "Difficulty: {difficulty}\n"
    "Topic: {topic}\n"
    "\n"
    "Return:"
)

ANSWER_RATING_TEMPLATE = (
    "You are an expert evaluator. Rank the answer on an integer scale "
    "1–5 using the criteria below. **Strict correctness gate:** if the "
    "answer contains any factual error, clear hallucination, or an answer "
    "that is broken/irrelevant for the question, the maximum score allowed "
    "is 2. After applying the gate, judge on correctness, clarity, "
    "relevance, structure/grammar, and depth.\n"
    "\n"
    "Scale (post-gate):\n"
    "1: Poor/off-topic or contains substantial errors.\n"
    "2: Partially correct but contains important mistakes or omissions.\n"
    "3: Correct, clear, and relevant; adequate but not deep.\n"
    "4: Correct with good structure, depth, and precise coverage.\n"
    "5: Correct and exceptional — excellent clarity, original insight, "
    "or thoroughness.\n"
    "\n"
    "IMPORTANT: Return ONLY the rank wrapped in XML exactly like this: "
    "<rank>n</rank> where n is an integer 1-5. No additional text, no "
    "punctuation, no explanation. If you are a thinking/reasoning model, "
    "place the final <rank> tag in the 'content' field only; do not place "
    "it in 'reasoning_content'.\n"
    "\n"
    "Question: {question}\n"
    "Answer: {answer}\n"
    "\n"
    "Return:"
)


def _require_text(value: str, what: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise ContractViolation(f"{what} must be non-empty text")
    return value


def render_task_prompt(difficulty: DifficultyLabel, topic: Topic) -> str:
    return TASK_GENERATION_TEMPLATE.format(
        difficulty=difficulty.label,
        topic=topic.name,
        snippet=topic.instruction_snippet,
    )


def render_answer_prompt(question: str) -> str:
    return ANSWER_GENERATION_TEMPLATE.format(
        question=_require_text(question, "question")
    )


def render_task_rank_prompt(
    question: str, difficulty: DifficultyLabel, topic: Topic
) -> str:
    return TASK_RATING_TEMPLATE.format(
        question=_require_text(question, "question"),
        difficulty=difficulty.label,
        topic=topic.name,
    )


def render_answer_rank_prompt(question: str, answer: str) -> str:
    return ANSWER_RATING_TEMPLATE.format(
        question=_require_text(question, "question"),
        answer=_require_text(answer, "answer"),
    )


# Bounded digits so adversarial replies cannot provoke huge int parses.
_RANK_RE = re.compile(r"<rank>\s*([+-]?\d{1,9})\s*</rank>")


def parse_rank(reply: str) -> int:
    """Extract the first well-formed ``<rank>n</rank>`` with n in [1, 5].

    Surrounding text is tolerated; a missing tag or an out-of-range value
    raises ParseFailure and the caller decides whether to re-ask.
    """
    if not isinstance(reply, str):
        raise ParseFailure("reply is not text")
    match = _RANK_RE.search(reply)
    if match is None:
        raise ParseFailure("no well-formed <rank>n</rank> tag in reply")
    value = int(match.group(1))
    if not 1 <= value <= 5:
        raise ParseFailure(f"rank {value} outside [1, 5]")
    return value
