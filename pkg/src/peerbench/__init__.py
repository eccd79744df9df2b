"""Self-sustaining peer evaluation of language-model pools.

A pool of models takes turns generating tasks, answering them, and judging
one another; judgments are aggregated with iteratively re-weighted
consensus so that judging authority tracks demonstrated performance. Runs
persist to an append-only JSONL log that supports deterministic resume and
post-hoc analytics.
"""
from .analytics import (
    AggregateJudgmentMatrix,
    CorrelationEntry,
    ExternalBenchmarkColumn,
    Leaderboard,
    LeaderboardSet,
    aggregate_matrix,
    build_leaderboards,
    convergence_series,
    correlate,
    diagonal_report,
    kendall_tau,
    load_external_csv,
    spearman_rho,
)
from .backends import (
    AgentBackend,
    HttpAgent,
    HttpEndpointSpec,
    SimulatedAgent,
    SimulatedAgentSpec,
    TransportError,
)
from .consensus import (
    ContractViolation,
    CumulativeScores,
    GateThresholds,
    JudgmentMatrix,
    WeightVector,
    aggregate_scores,
    l1_delta,
    normalize_weights,
    qa_gate,
    update_cumulative,
    weighted_mean,
    weighted_median,
)
from .engine import (
    BenchmarkEngine,
    EngineState,
    IterationOutcome,
    ModelRegistry,
    RegisteredModel,
    RunConfig,
    TaskRecord,
    resume_benchmark,
    run_benchmark,
)
from .prompts import (
    DIFFICULTY_LEVELS,
    TOPIC_NAMES,
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
    topics,
)
from .runlog import RunLog, RunLogWriter, append_event, read_log, resume_state
from .streams import CountingStream, StreamSet, derive_seed

__version__ = "0.1.0"

__all__ = [
    "AgentBackend",
    "AggregateJudgmentMatrix",
    "BenchmarkEngine",
    "ContractViolation",
    "CorrelationEntry",
    "CountingStream",
    "CumulativeScores",
    "DIFFICULTY_LEVELS",
    "DifficultyLabel",
    "EngineState",
    "ExternalBenchmarkColumn",
    "GateThresholds",
    "HttpAgent",
    "HttpEndpointSpec",
    "IterationOutcome",
    "JudgmentMatrix",
    "Leaderboard",
    "LeaderboardSet",
    "ModelRegistry",
    "ParseFailure",
    "RegisteredModel",
    "RunConfig",
    "RunLog",
    "RunLogWriter",
    "SimulatedAgent",
    "SimulatedAgentSpec",
    "StreamSet",
    "TOPIC_NAMES",
    "TaskRecord",
    "Topic",
    "TransportError",
    "WeightVector",
    "aggregate_matrix",
    "aggregate_scores",
    "append_event",
    "build_leaderboards",
    "convergence_series",
    "correlate",
    "derive_seed",
    "diagonal_report",
    "kendall_tau",
    "l1_delta",
    "load_external_csv",
    "normalize_weights",
    "parse_rank",
    "qa_gate",
    "read_log",
    "render_answer_prompt",
    "render_answer_rank_prompt",
    "render_task_prompt",
    "render_task_rank_prompt",
    "resume_benchmark",
    "resume_state",
    "run_benchmark",
    "sample_difficulty",
    "sample_topic",
    "spearman_rho",
    "topics",
    "update_cumulative",
    "weighted_mean",
    "weighted_median",
]
