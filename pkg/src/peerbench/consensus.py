"""Pure consensus arithmetic for peer-evaluation rounds.

Weighted aggregation of a judge-by-contestant score matrix, running
averages across accepted rounds, weight renormalization, quality-gate
statistics, and the L1 distance used to watch weights converge. Everything
here is side-effect free and operates on small immutable value types, so
call sites can share instances freely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

SCORE_MIN = 1.0
SCORE_MAX = 5.0

# Slack for float validation (weights summing to 1, scores at the rail).
SIMPLEX_TOL = 1e-9


class ContractViolation(ValueError):
    """An argument breaks a documented precondition."""


def _check_finite(values: Sequence[float], what: str) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ContractViolation(f"{what} must be finite, got {v!r}")


@dataclass(frozen=True)
class WeightVector:
    """Judging-authority weights: nonnegative, summing to 1 within 1e-9."""

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        ws = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "weights", ws)
        if not ws:
            raise ContractViolation("weight vector must not be empty")
        _check_finite(ws, "weights")
        if any(w < 0.0 for w in ws):
            raise ContractViolation("weights must be nonnegative")
        total = math.fsum(ws)
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ContractViolation(f"weights must sum to 1, got {total!r}")

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        if n < 1:
            raise ContractViolation("need at least one weight")
        return cls((1.0 / n,) * n)

    def __len__(self) -> int:
        return len(self.weights)

    def __getitem__(self, i: int) -> float:
        return self.weights[i]


@dataclass(frozen=True)
class JudgmentMatrix:
    """Square judge-by-contestant score matrix; ``None`` marks missing cells.

    Row index is the judge, column index the contestant. Present cells are
    scores in [1, 5]; the diagonal (self-judgment) is a cell like any other.
    """

    scores: tuple[tuple[Optional[float], ...], ...]

    def __post_init__(self) -> None:
        rows = tuple(
            tuple(None if s is None else float(s) for s in row) for row in self.scores
        )
        object.__setattr__(self, "scores", rows)
        n = len(rows)
        if n < 1:
            raise ContractViolation("judgment matrix must not be empty")
        for row in rows:
            if len(row) != n:
                raise ContractViolation("judgment matrix must be square")
            for s in row:
                if s is None:
                    continue
                if not math.isfinite(s) or not SCORE_MIN <= s <= SCORE_MAX:
                    raise ContractViolation(f"scores must lie in [1, 5], got {s!r}")

    @classmethod
    def from_rows(
        cls, rows: Sequence[Sequence[Optional[float]]]
    ) -> "JudgmentMatrix":
        return cls(tuple(tuple(row) for row in rows))

    @property
    def n(self) -> int:
        return len(self.scores)

    @property
    def complete(self) -> bool:
        return all(s is not None for row in self.scores for s in row)

    def row(self, i: int) -> tuple[Optional[float], ...]:
        return self.scores[i]

    def column(self, j: int) -> tuple[Optional[float], ...]:
        return tuple(row[j] for row in self.scores)


@dataclass(frozen=True)
class CumulativeScores:
    """Running-average consensus scores over the rounds accepted so far."""

    scores: tuple[float, ...]
    accepted_count: int

    def __post_init__(self) -> None:
        scores = tuple(float(s) for s in self.scores)
        object.__setattr__(self, "scores", scores)
        if not scores:
            raise ContractViolation("cumulative scores must not be empty")
        _check_finite(scores, "cumulative scores")
        if self.accepted_count < 0:
            raise ContractViolation("accepted_count must be >= 0")
        if self.accepted_count == 0 and any(s != 0.0 for s in scores):
            raise ContractViolation("zero accepted rounds requires all-zero scores")
        if any(s < 0.0 for s in scores):
            raise ContractViolation("cumulative scores must be nonnegative")

    @classmethod
    def zeros(cls, n: int) -> "CumulativeScores":
        if n < 1:
            raise ContractViolation("need at least one model")
        return cls((0.0,) * n, 0)

    def __len__(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class GateThresholds:
    """Acceptance thresholds for the task-quality gate."""

    lambda_mean: float = 3.5
    lambda_median: float = 3.0

    def __post_init__(self) -> None:
        for name, value in (
            ("lambda_mean", self.lambda_mean),
            ("lambda_median", self.lambda_median),
        ):
            if not math.isfinite(value) or not SCORE_MIN <= value <= SCORE_MAX:
                raise ContractViolation(f"{name} must lie in [1, 5], got {value!r}")


def aggregate_scores(matrix: JudgmentMatrix, weights: WeightVector) -> tuple[float, ...]:
    """Weight-average each contestant column: r_c = sum_r w_r * J[r][c].

    Requires a complete matrix; missing-cell handling (excluding a judge and
    renormalizing per column) is the orchestrator's job, not this kernel's.
    """
    n = matrix.n
    if len(weights) != n:
        raise ContractViolation("weight length must match matrix size")
    if not matrix.complete:
        raise ContractViolation("aggregate_scores requires a complete matrix")
    out = []
    for c in range(n):
        acc = 0.0
        for r in range(n):
            acc += weights[r] * matrix.scores[r][c]  # type: ignore[operator]
        out.append(acc)
    return tuple(out)


def update_cumulative(
    cumulative: CumulativeScores, rewards: Sequence[float]
) -> CumulativeScores:
    """Fold one accepted round into the running average.

    new_j = (count * old_j + r_j) / (count + 1); the count increments only
    here, so skipped rounds never dilute the average.
    """
    if len(rewards) != len(cumulative):
        raise ContractViolation("reward length must match cumulative length")
    rewards = tuple(float(r) for r in rewards)
    _check_finite(rewards, "rewards")
    for r in rewards:
        if not (SCORE_MIN - SIMPLEX_TOL) <= r <= (SCORE_MAX + SIMPLEX_TOL):
            raise ContractViolation(f"rewards must lie in [1, 5], got {r!r}")
    count = cumulative.accepted_count
    scores = tuple(
        (count * old + r) / (count + 1) for old, r in zip(cumulative.scores, rewards)
    )
    return CumulativeScores(scores, count + 1)


def normalize_weights(cumulative: CumulativeScores) -> WeightVector:
    """Proportional weights w_j = c_j / sum_k c_k."""
    if cumulative.accepted_count < 1:
        raise ContractViolation("cannot normalize before any accepted round")
    total = math.fsum(cumulative.scores)
    if total <= 0.0:
        raise ContractViolation("cumulative scores sum to zero")
    return WeightVector(tuple(s / total for s in cumulative.scores))


def _check_gate_scores(scores: Sequence[float], weights: WeightVector) -> tuple[float, ...]:
    if len(scores) != len(weights):
        raise ContractViolation("score length must match weight length")
    scores = tuple(float(s) for s in scores)
    for s in scores:
        if not math.isfinite(s) or not SCORE_MIN <= s <= SCORE_MAX:
            raise ContractViolation(f"scores must lie in [1, 5], got {s!r}")
    return scores


def weighted_mean(scores: Sequence[float], weights: WeightVector) -> float:
    """Plain weighted average of scores in [1, 5]."""
    scores = _check_gate_scores(scores, weights)
    acc = 0.0
    for s, w in zip(scores, weights.weights):
        acc += w * s
    return acc


def weighted_median(scores: Sequence[float], weights: WeightVector) -> float:
    """Lower weighted median.

    Sort score/weight pairs by score ascending and return the smallest
    score whose cumulative weight reaches 0.5.
    """
    scores = _check_gate_scores(scores, weights)
    pairs = sorted(zip(scores, weights.weights), key=lambda p: p[0])
    cum = 0.0
    for score, weight in pairs:
        cum += weight
        if cum >= 0.5:
            return score
    return pairs[-1][0]  # unreachable for valid weights; guards float undersum


def qa_gate(
    scores: Sequence[float], weights: WeightVector, thresholds: GateThresholds
) -> bool:
    """Accept a task iff weighted mean AND weighted median clear their thresholds."""
    return (
        weighted_mean(scores, weights) >= thresholds.lambda_mean
        and weighted_median(scores, weights) >= thresholds.lambda_median
    )


def l1_delta(previous: WeightVector, current: WeightVector) -> float:
    """L1 distance between consecutive weight vectors."""
    if len(previous) != len(current):
        raise ContractViolation("weight vectors must have equal length")
    acc = 0.0
    for p, c in zip(previous.weights, current.weights):
        acc += abs(p - c)
    return acc
