"""Post-run analytics over a run log.

Leaderboards (aggregate and per topic), the averaged judge-by-contestant
matrix with its self-preference diagonal, the L1 weight-convergence series,
and tie-aware rank correlations against external benchmark columns.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .consensus import ContractViolation
from .runlog import RunLog


class NoAcceptedRounds(ValueError):
    """The log contains no accepted iterations to analyze."""


class UndefinedCorrelation(ValueError):
    """A correlation denominator vanished (an input is fully tied)."""


class InsufficientOverlap(ValueError):
    """Too few models are shared between the run and the external column."""


# -- rank correlations -------------------------------------------------------


def _check_paired(x: Sequence[float], y: Sequence[float]) -> tuple[tuple[float, ...], tuple[float, ...]]:
    xs = tuple(float(v) for v in x)
    ys = tuple(float(v) for v in y)
    if len(xs) != len(ys):
        raise ContractViolation("inputs must have equal length")
    if len(xs) < 3:
        raise ContractViolation("need at least 3 paired values")
    for v in xs + ys:
        if not math.isfinite(v):
            raise ContractViolation("inputs must be finite")
    return xs, ys


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Tie-corrected Kendall correlation (the tau-b variant).

    tau_b = (C - D) / sqrt((n0 - n1) (n0 - n2)) with n0 all pairs and
    n1/n2 the within-tie pair counts of each input.
    """
    xs, ys = _check_paired(x, y)
    n = len(xs)
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (xs[i] > xs[j]) - (xs[i] < xs[j])
            dy = (ys[i] > ys[j]) - (ys[i] < ys[j])
            prod = dx * dy
            if prod > 0:
                concordant += 1
            elif prod < 0:
                discordant += 1
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)
    n2 = _tie_pairs(ys)
    denominator = math.sqrt((n0 - n1) * (n0 - n2))
    if denominator == 0.0:
        raise UndefinedCorrelation("an input is fully tied")
    return (concordant - discordant) / denominator


def _tie_pairs(values: tuple[float, ...]) -> int:
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return sum(c * (c - 1) // 2 for c in counts.values())


def _average_ranks(values: tuple[float, ...]) -> list[float]:
    """Ranks 1..n with tied values sharing the mean of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks (tie-aware Spearman)."""
    xs, ys = _check_paired(x, y)
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    n = len(rx)
    mean_x = sum(rx) / n
    mean_y = sum(ry) / n
    cov = var_x = var_y = 0.0
    for a, b in zip(rx, ry):
        da = a - mean_x
        db = b - mean_y
        cov += da * db
        var_x += da * da
        var_y += db * db
    if var_x == 0.0 or var_y == 0.0:
        raise UndefinedCorrelation("an input is fully tied")
    return cov / math.sqrt(var_x * var_y)


# -- leaderboards -------------------------------------------------------------


@dataclass(frozen=True)
class LeaderboardRow:
    model_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class Leaderboard:
    """Models sorted by descending score; ties share a dense rank."""

    scope: str
    rows: tuple[LeaderboardRow, ...]

    def scores_for(self, model_ids: Sequence[str]) -> list[float]:
        by_id = {row.model_id: row.score for row in self.rows}
        return [by_id[m] for m in model_ids]

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(row.model_id for row in self.rows)


@dataclass(frozen=True)
class LeaderboardSet:
    aggregate: Leaderboard
    by_topic: dict[str, Leaderboard]


def _rank_rows(scope: str, scores: dict[str, float]) -> Leaderboard:
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    rows = []
    rank = 0
    previous: Optional[float] = None
    for model_id, score in ordered:
        if previous is None or score != previous:
            rank += 1
            previous = score
        rows.append(LeaderboardRow(model_id=model_id, score=score, rank=rank))
    return Leaderboard(scope=scope, rows=tuple(rows))


def build_leaderboards(log: RunLog) -> LeaderboardSet:
    """Aggregate board from the final consensus scores, plus per-topic boards.

    The aggregate scores are the run's final cumulative averages exactly;
    each topic board averages the reward vectors of that topic's accepted
    rounds.
    """
    rounds = log.accepted_rounds()
    if not rounds:
        raise NoAcceptedRounds("log has no accepted iterations")
    ids = log.model_ids
    final = rounds[-1].cumulative
    aggregate = _rank_rows("aggregate", dict(zip(ids, final)))
    by_topic: dict[str, Leaderboard] = {}
    for topic in sorted({r.topic for r in rounds}):
        members = [r for r in rounds if r.topic == topic]
        means = [
            sum(r.rewards[i] for r in members) / len(members) for i in range(len(ids))
        ]
        by_topic[topic] = _rank_rows(f"topic:{topic}", dict(zip(ids, means)))
    return LeaderboardSet(aggregate=aggregate, by_topic=by_topic)


# -- judgment heatmap ---------------------------------------------------------


@dataclass(frozen=True)
class AggregateJudgmentMatrix:
    """Cellwise mean of accepted judgment matrices, with observation counts."""

    model_ids: tuple[str, ...]
    means: tuple[tuple[Optional[float], ...], ...]
    counts: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class DiagonalEntry:
    """Self-score versus what the peers gave the same contestant."""

    model_id: str
    self_score: float
    peer_mean: float
    delta: float


def aggregate_matrix(log: RunLog) -> AggregateJudgmentMatrix:
    rounds = log.accepted_rounds()
    if not rounds:
        raise NoAcceptedRounds("log has no accepted iterations")
    n = log.n_models
    sums = [[0.0] * n for _ in range(n)]
    counts = [[0] * n for _ in range(n)]
    for r in rounds:
        for i in range(n):
            for j in range(n):
                cell = r.scores[i][j]
                if cell is not None:
                    sums[i][j] += cell
                    counts[i][j] += 1
    means = tuple(
        tuple(
            sums[i][j] / counts[i][j] if counts[i][j] else None for j in range(n)
        )
        for i in range(n)
    )
    return AggregateJudgmentMatrix(
        model_ids=log.model_ids,
        means=means,
        counts=tuple(tuple(row) for row in counts),
    )


def diagonal_report(matrix: AggregateJudgmentMatrix) -> list[DiagonalEntry]:
    """Self-preference check: diagonal minus the column's off-diagonal mean."""
    n = len(matrix.model_ids)
    if n < 2:
        raise ContractViolation("need at least two models")
    entries = []
    for j in range(n):
        self_score = matrix.means[j][j]
        peers = [
            matrix.means[i][j]
            for i in range(n)
            if i != j and matrix.means[i][j] is not None
        ]
        if self_score is None or not peers:
            raise ContractViolation(
                f"column {matrix.model_ids[j]!r} lacks observed cells"
            )
        peer_mean = sum(peers) / len(peers)
        entries.append(
            DiagonalEntry(
                model_id=matrix.model_ids[j],
                self_score=self_score,
                peer_mean=peer_mean,
                delta=self_score - peer_mean,
            )
        )
    return entries


# -- convergence --------------------------------------------------------------


def convergence_series(log: RunLog) -> list[tuple[int, float]]:
    """Per-iteration L1 distance between successive weight vectors.

    Skipped iterations contribute an exact zero since the weights carry
    over unchanged.
    """
    series = log.weight_series()
    out = []
    for t in range(1, len(series)):
        previous, current = series[t - 1], series[t]
        delta = sum(abs(a - b) for a, b in zip(previous, current))
        out.append((t, delta))
    return out


# -- external benchmarks -------------------------------------------------------


@dataclass(frozen=True)
class ExternalBenchmarkColumn:
    """Published scores for one benchmark, keyed by model id."""

    benchmark_name: str
    values: dict[str, float]


@dataclass(frozen=True)
class CorrelationEntry:
    benchmark_name: str
    kendall: float
    spearman: float
    n_common: int


def load_external_csv(path: Path | str) -> list[ExternalBenchmarkColumn]:
    """Read ``model_id,<benchmark>[,<benchmark>...]`` into one column each."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        if len(header) < 2 or header[0] != "model_id":
            raise ValueError(
                f"{path}: header must be model_id,<benchmark>[,<benchmark>...]"
            )
        names = header[1:]
        columns: list[dict[str, float]] = [{} for _ in names]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {lineno} has {len(row)} fields")
            model_id = row[0]
            for k, cell in enumerate(row[1:]):
                try:
                    columns[k][model_id] = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: row {lineno}, column {names[k]!r}: "
                        f"not a number: {cell!r}"
                    ) from None
    return [
        ExternalBenchmarkColumn(benchmark_name=name, values=columns[k])
        for k, name in enumerate(names)
    ]


def correlate(
    board: Leaderboard, external: ExternalBenchmarkColumn
) -> CorrelationEntry:
    """Rank agreement between the run's board and one external column."""
    common = [row.model_id for row in board.rows if row.model_id in external.values]
    if len(common) < 3:
        raise InsufficientOverlap(
            f"need >= 3 common models with {external.benchmark_name}, "
            f"found {len(common)}"
        )
    ours = board.scores_for(common)
    theirs = [external.values[m] for m in common]
    return CorrelationEntry(
        benchmark_name=external.benchmark_name,
        kendall=kendall_tau(ours, theirs),
        spearman=spearman_rho(ours, theirs),
        n_common=len(common),
    )
