"""Iterative peer-evaluation engine.

Each iteration: sample a generator and have it author a task, gate the task
on weighted peer ratings (retrying up to the attempt budget), collect every
model's answer, assemble the full judge-by-contestant matrix including the
diagonal, then fold the aggregated scores into the running consensus state.
Rejected or failed iterations leave the state untouched.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, TypeVar

from . import consensus
from .backends import AgentBackend, TransportError
from .consensus import (
    ContractViolation,
    CumulativeScores,
    GateThresholds,
    JudgmentMatrix,
    WeightVector,
)
from .prompts import (
    DifficultyLabel,
    ParseFailure,
    Topic,
    parse_rank,
    render_answer_prompt,
    render_answer_rank_prompt,
    render_task_prompt,
    render_task_rank_prompt,
    sample_difficulty,
    sample_topic,
)
from .runlog import RunLog, RunLogWriter, make_header, read_log, resume_state
from .streams import StreamSet

_T = TypeVar("_T")

STREAM_GENERATOR = "generator"
STREAM_TOPIC = "topic"
STREAM_DIFFICULTY = "difficulty"

# Parse failures on a rank query earn this many re-asks before the cell
# is marked missing; transport failures are terminal after the backend's
# own retry.
PARSE_REASKS = 2

_SEED_BOUND = 2**63


def backend_stream_label(model_id: str) -> str:
    return f"backend:{model_id}"


@dataclass(frozen=True)
class RegisteredModel:
    """One participant: stable id, backend handle, display name."""

    model_id: str
    backend: AgentBackend
    display_name: str = ""

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ContractViolation("model_id must be non-empty")
        if not self.display_name:
            object.__setattr__(self, "display_name", self.model_id)


class ModelRegistry:
    """Ordered model pool; the order defines matrix indices for the run."""

    def __init__(self, models: Sequence[RegisteredModel]):
        models = tuple(models)
        if len(models) < 2:
            raise ContractViolation("need at least two models")
        ids = [m.model_id for m in models]
        if len(set(ids)) != len(ids):
            raise ContractViolation("model ids must be unique")
        self._models = models
        self._index = {m.model_id: i for i, m in enumerate(models)}

    def __len__(self) -> int:
        return len(self._models)

    def __iter__(self):
        return iter(self._models)

    def __getitem__(self, i: int) -> RegisteredModel:
        return self._models[i]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m.model_id for m in self._models)

    def index_of(self, model_id: str) -> int:
        try:
            return self._index[model_id]
        except KeyError:
            raise ContractViolation(f"model {model_id!r} is not registered") from None

    def snapshot(self) -> list[dict]:
        return [
            {"model_id": m.model_id, "display_name": m.display_name}
            for m in self._models
        ]


@dataclass(frozen=True)
class RunConfig:
    """Run hyperparameters; defaults are the reference operating point."""

    iterations: int = 40
    thresholds: GateThresholds = GateThresholds()
    max_retries: int = 3
    temperature: float = 0.8
    top_p: float = 0.9
    seed: int = 0
    judge_mode: str = "multi"
    max_in_flight: int = 1

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ContractViolation("iterations must be >= 1")
        if self.max_retries < 1:
            raise ContractViolation("max_retries must be >= 1")
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ContractViolation("temperature must be >= 0")
        if not 0.0 < self.top_p <= 1.0:
            raise ContractViolation("top_p must lie in (0, 1]")
        if not -_SEED_BOUND <= self.seed < _SEED_BOUND:
            raise ContractViolation("seed must fit in a signed 64-bit integer")
        if self.max_in_flight < 1:
            raise ContractViolation("max_in_flight must be >= 1")
        if self.judge_mode != "multi" and not (
            self.judge_mode.startswith("single:") and len(self.judge_mode) > 7
        ):
            raise ContractViolation(
                "judge_mode must be 'multi' or 'single:<model_id>'"
            )

    def single_judge_id(self) -> Optional[str]:
        if self.judge_mode.startswith("single:"):
            return self.judge_mode[len("single:"):]
        return None

    def snapshot(self) -> dict:
        """Flat JSON-friendly form used in log headers and resume checks."""
        return {
            "iterations": self.iterations,
            "lambda_mean": self.thresholds.lambda_mean,
            "lambda_median": self.thresholds.lambda_median,
            "max_retries": self.max_retries,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "seed": self.seed,
            "judge_mode": self.judge_mode,
            "max_in_flight": self.max_in_flight,
        }


@dataclass(frozen=True)
class TaskRecord:
    """One generation attempt and its QA verdict."""

    iteration: int
    generator_id: str
    topic: Topic
    difficulty: DifficultyLabel
    question: str
    qa_scores: tuple[Optional[float], ...]
    accepted: bool
    attempt: int
    weighted_mean: Optional[float] = None
    weighted_median: Optional[float] = None


@dataclass(frozen=True)
class IterationOutcome:
    """What one iteration produced; skipped rounds carry no matrix or rewards."""

    iteration: int
    task: Optional[TaskRecord]
    answers: Optional[tuple[Optional[str], ...]]
    matrix: Optional[JudgmentMatrix]
    rewards: Optional[tuple[float, ...]]
    skipped: bool
    error: Optional[str] = None


@dataclass(frozen=True)
class EngineState:
    """Consensus state between iterations."""

    cumulative: CumulativeScores
    weights: WeightVector
    next_iteration: int

    @classmethod
    def initial(cls, n: int) -> "EngineState":
        return cls(CumulativeScores.zeros(n), WeightVector.uniform(n), 1)


class _AggregationGap(Exception):
    """A contestant column (or the single judge's row) is fully missing."""


class BenchmarkEngine:
    """Runs the protocol over a registry, emitting events to a sink."""

    def __init__(
        self,
        registry: ModelRegistry,
        config: RunConfig,
        *,
        sink: Optional[Callable[[dict], None]] = None,
        state: Optional[EngineState] = None,
        draw_counts: Optional[dict[str, int]] = None,
    ):
        single_id = config.single_judge_id()
        if single_id is not None:
            registry.index_of(single_id)  # must be registered
        self.registry = registry
        self.config = config
        self._sink = sink if sink is not None else lambda event: None
        labels = [STREAM_GENERATOR, STREAM_TOPIC, STREAM_DIFFICULTY]
        labels += [backend_stream_label(m.model_id) for m in registry]
        self.streams = StreamSet(config.seed, labels)
        if draw_counts:
            self.streams.fast_forward(draw_counts)
        self.state = state if state is not None else EngineState.initial(len(registry))

    # -- event plumbing -----------------------------------------------------

    def _emit(self, kind: str, iteration: int, **payload) -> None:
        self._sink({"kind": kind, "iteration": iteration, **payload})

    def _map_models(self, fn: Callable[[int], _T]) -> list[_T]:
        """Apply fn to every model index, optionally fanning out to threads.

        Results land at their index, so completion order cannot affect the
        assembled structures.
        """
        n = len(self.registry)
        workers = min(self.config.max_in_flight, n)
        if workers <= 1:
            return [fn(i) for i in range(n)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(n)))

    def _complete(self, model: RegisteredModel, prompt: str) -> str:
        return model.backend.complete(
            prompt,
            temperature=self.config.temperature,
            top_p=self.config.top_p,
            rng=self.streams[backend_stream_label(model.model_id)],
        )

    def _ask_rank(self, model: RegisteredModel, prompt: str) -> Optional[int]:
        """Query one rank; re-ask on unparseable replies, give up on transport."""
        for _ in range(1 + PARSE_REASKS):
            try:
                reply = self._complete(model, prompt)
            except TransportError:
                return None
            try:
                return parse_rank(reply)
            except ParseFailure:
                continue
        return None

    # -- pipeline stages ----------------------------------------------------

    def _generate_task(self, iteration: int, attempt: int) -> Optional[TaskRecord]:
        """One generation attempt: sample, author, QA-gate. None if no text."""
        generator = self.registry[self.streams[STREAM_GENERATOR].index(len(self.registry))]
        topic = sample_topic(self.streams[STREAM_TOPIC])
        difficulty = sample_difficulty(self.streams[STREAM_DIFFICULTY])
        try:
            question = self._complete(generator, render_task_prompt(difficulty, topic))
        except TransportError:
            return None
        self._emit(
            "task_generated",
            iteration,
            attempt=attempt,
            generator_id=generator.model_id,
            topic=topic.name,
            difficulty=difficulty.label,
            question=question,
        )
        rank_prompt = render_task_rank_prompt(question, difficulty, topic)
        qa_scores = tuple(
            self._map_models(
                lambda i: self._ask_rank(self.registry[i], rank_prompt)
            )
        )
        accepted, wmean, wmedian = self._gate(qa_scores)
        self._emit(
            "task_gated",
            iteration,
            attempt=attempt,
            qa_scores=list(qa_scores),
            weighted_mean=wmean,
            weighted_median=wmedian,
            accepted=accepted,
        )
        return TaskRecord(
            iteration=iteration,
            generator_id=generator.model_id,
            topic=topic,
            difficulty=difficulty,
            question=question,
            qa_scores=qa_scores,
            accepted=accepted,
            attempt=attempt,
            weighted_mean=wmean,
            weighted_median=wmedian,
        )

    def _gate(
        self, qa_scores: tuple[Optional[int], ...]
    ) -> tuple[bool, Optional[float], Optional[float]]:
        """Gate statistics under the current weights.

        Scorers whose rating is missing are excluded and the remaining
        weights renormalized; with every scorer present this reduces to the
        plain weighted statistics.
        """
        weights = self.state.weights
        thresholds = self.config.thresholds
        present = [
            (float(s), weights[i]) for i, s in enumerate(qa_scores) if s is not None
        ]
        if not present:
            return False, None, None
        if len(present) == len(qa_scores):
            scores = [s for s, _ in present]
            wmean = consensus.weighted_mean(scores, weights)
            wmedian = consensus.weighted_median(scores, weights)
        else:
            total = sum(w for _, w in present)
            if total <= 0.0:
                return False, None, None
            scores = [s for s, _ in present]
            renorm = WeightVector(tuple(w / total for _, w in present))
            wmean = consensus.weighted_mean(scores, renorm)
            wmedian = consensus.weighted_median(scores, renorm)
        accepted = wmean >= thresholds.lambda_mean and wmedian >= thresholds.lambda_median
        return accepted, wmean, wmedian

    def _collect_answers(self, question: str) -> tuple[Optional[str], ...]:
        prompt = render_answer_prompt(question)

        def one(i: int) -> Optional[str]:
            try:
                return self._complete(self.registry[i], prompt)
            except TransportError:
                return None

        return tuple(self._map_models(one))

    def collect_judgments(
        self, question: str, answers: Sequence[Optional[str]]
    ) -> JudgmentMatrix:
        """Assemble the full n x n matrix, self-judgments included.

        Missing answers leave their whole column missing; individual cells
        go missing only after the parse-retry budget is exhausted or the
        judge's backend fails.
        """
        n = len(self.registry)
        if len(answers) != n:
            raise ContractViolation("answers length must match registry size")
        prompts = [
            None if answers[j] is None else render_answer_rank_prompt(question, answers[j])
            for j in range(n)
        ]

        def judge_row(i: int) -> list[Optional[float]]:
            judge = self.registry[i]
            row: list[Optional[float]] = [None] * n
            for j in range(n):
                if prompts[j] is None:
                    continue
                rank = self._ask_rank(judge, prompts[j])
                row[j] = None if rank is None else float(rank)
            return row

        return JudgmentMatrix.from_rows(self._map_models(judge_row))

    def _aggregate(self, matrix: JudgmentMatrix) -> tuple[float, ...]:
        """Consensus rewards, or the single judge's raw row in ablation mode."""
        single_id = self.config.single_judge_id()
        if single_id is not None:
            row = matrix.row(self.registry.index_of(single_id))
            if any(cell is None for cell in row):
                raise _AggregationGap(f"single judge {single_id} has missing cells")
            return tuple(row)  # type: ignore[arg-type]
        if matrix.complete:
            return consensus.aggregate_scores(matrix, self.state.weights)
        weights = self.state.weights
        rewards = []
        for j in range(matrix.n):
            column = matrix.column(j)
            present = [(weights[i], s) for i, s in enumerate(column) if s is not None]
            total = sum(w for w, _ in present)
            if not present or total <= 0.0:
                raise _AggregationGap(
                    f"no usable judgments for {self.registry[j].model_id}"
                )
            rewards.append(sum(w * s for w, s in present) / total)
        return tuple(rewards)

    # -- the protocol -------------------------------------------------------

    def run_iteration(self) -> IterationOutcome:
        """Execute one full iteration and advance the engine state."""
        t = self.state.next_iteration
        self._emit("iteration_started", t)

        task: Optional[TaskRecord] = None
        for attempt in range(1, self.config.max_retries + 1):
            record = self._generate_task(t, attempt)
            if record is not None:
                task = record
                if task.accepted:
                    break
        if task is None or not task.accepted:
            reason = (
                "qa_gate_rejected" if task is not None else "task_generation_failed"
            )
            return self._skip(t, task, None, reason)

        answers = self._collect_answers(task.question)
        self._emit("answers_collected", t, answers=list(answers))
        missing = [
            self.registry[i].model_id for i, a in enumerate(answers) if a is None
        ]
        if missing:
            return self._skip(
                t, task, answers, "answers_missing: " + ", ".join(missing)
            )

        matrix = self.collect_judgments(task.question, answers)
        self._emit(
            "judgments_collected",
            t,
            scores=[list(row) for row in matrix.scores],
        )
        try:
            rewards = self._aggregate(matrix)
        except _AggregationGap as gap:
            return self._skip(t, task, answers, str(gap), matrix=matrix)

        cumulative = consensus.update_cumulative(self.state.cumulative, rewards)
        weights = consensus.normalize_weights(cumulative)
        self._emit(
            "state_updated",
            t,
            rewards=list(rewards),
            cumulative=list(cumulative.scores),
            accepted_count=cumulative.accepted_count,
            weights=list(weights.weights),
            draws=self.streams.draw_counts(),
        )
        self.state = EngineState(cumulative, weights, t + 1)
        return IterationOutcome(
            iteration=t,
            task=task,
            answers=answers,
            matrix=matrix,
            rewards=rewards,
            skipped=False,
        )

    def _skip(
        self,
        t: int,
        task: Optional[TaskRecord],
        answers: Optional[tuple[Optional[str], ...]],
        reason: str,
        matrix: Optional[JudgmentMatrix] = None,
    ) -> IterationOutcome:
        """Close the iteration without touching (c, w)."""
        self._emit(
            "iteration_skipped", t, reason=reason, draws=self.streams.draw_counts()
        )
        self.state = replace(self.state, next_iteration=t + 1)
        return IterationOutcome(
            iteration=t,
            task=task,
            answers=answers,
            matrix=matrix,
            rewards=None,
            skipped=True,
            error=reason,
        )

    def run(self, until_iteration: Optional[int] = None) -> EngineState:
        """Run through the target iteration and emit the completion event."""
        target = self.config.iterations if until_iteration is None else until_iteration
        while self.state.next_iteration <= target:
            self.run_iteration()
        self._emit(
            "run_completed",
            target,
            accepted_count=self.state.cumulative.accepted_count,
            draws=self.streams.draw_counts(),
        )
        return self.state


def run_benchmark(
    registry: ModelRegistry,
    config: RunConfig,
    log_path: Optional[str] = None,
) -> RunLog:
    """Execute a full run, persisting to ``log_path`` or in memory.

    Whatever happens mid-run, every emitted event is already flushed to the
    log, so the file on disk is always a valid resume checkpoint.
    """
    header = make_header(config.snapshot(), registry.snapshot(), config.seed)
    if log_path is None:
        events: list[dict] = []
        engine = BenchmarkEngine(registry, config, sink=events.append)
        engine.run()
        return RunLog(header=header, events=events, path=None)
    with RunLogWriter.create(log_path, header) as writer:
        engine = BenchmarkEngine(registry, config, sink=writer.append)
        engine.run()
    return read_log(log_path)


def resume_benchmark(
    log_path: str,
    registry: ModelRegistry,
    config: RunConfig,
) -> RunLog:
    """Extend an interrupted or completed run up to ``config.iterations``.

    Refuses to continue if the log's config/registry snapshots do not match
    the current inputs (the iteration target itself may differ).
    """
    log = read_log(log_path)
    restored = resume_state(log, config.snapshot(), registry.snapshot())
    if restored.next_iteration > config.iterations:
        return log
    state = EngineState(
        cumulative=CumulativeScores(restored.cumulative, restored.accepted_count),
        weights=WeightVector(restored.weights),
        next_iteration=restored.next_iteration,
    )
    with RunLogWriter.open_existing(log_path) as writer:
        engine = BenchmarkEngine(
            registry,
            config,
            sink=writer.append,
            state=state,
            draw_counts=restored.draw_counts,
        )
        engine.run()
    return read_log(log_path)
