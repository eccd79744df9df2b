"""Report rendering.

Turns a run log into leaderboard/topic/convergence/heatmap tables and
writes them as CSV or markdown. Floats are serialized with ``repr`` so a
parse-and-reemit round trip is byte-stable.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .analytics import (
    AggregateJudgmentMatrix,
    CorrelationEntry,
    Leaderboard,
    aggregate_matrix,
    build_leaderboards,
    convergence_series,
)
from .runlog import RunLog

REPORT_FORMATS = ("csv", "md")


@dataclass(frozen=True)
class ReportBundle:
    """Everything the report command emits for one run."""

    leaderboard: Leaderboard
    topics: dict[str, Leaderboard]
    convergence: list[tuple[int, float]]
    heatmap: AggregateJudgmentMatrix


def build_report(log: RunLog) -> ReportBundle:
    boards = build_leaderboards(log)
    return ReportBundle(
        leaderboard=boards.aggregate,
        topics=boards.by_topic,
        convergence=convergence_series(log),
        heatmap=aggregate_matrix(log),
    )


def _num(value) -> str:
    return repr(float(value))


def _csv_text(rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerows(rows)
    return buffer.getvalue()


def _markdown_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = [
        "| " + " | ".join(header) + " |",
        "| " + " | ".join("---" for _ in header) + " |",
    ]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def leaderboard_rows(board: Leaderboard) -> list[list[str]]:
    return [
        [str(row.rank), row.model_id, _num(row.score)] for row in board.rows
    ]


def render_leaderboard_csv(board: Leaderboard) -> str:
    return _csv_text([["rank", "model_id", "score"], *leaderboard_rows(board)])


def render_leaderboard_markdown(board: Leaderboard) -> str:
    return _markdown_table(["rank", "model_id", "score"], leaderboard_rows(board))


def _topic_rows(topics: dict[str, Leaderboard]) -> list[list[str]]:
    rows = []
    for topic in sorted(topics):
        for row in topics[topic].rows:
            rows.append([topic, str(row.rank), row.model_id, _num(row.score)])
    return rows


def render_topics_csv(topics: dict[str, Leaderboard]) -> str:
    return _csv_text([["topic", "rank", "model_id", "score"], *_topic_rows(topics)])


def render_topics_markdown(topics: dict[str, Leaderboard]) -> str:
    return _markdown_table(["topic", "rank", "model_id", "score"], _topic_rows(topics))


def _convergence_rows(series: Sequence[tuple[int, float]]) -> list[list[str]]:
    return [[str(t), _num(delta)] for t, delta in series]


def render_convergence_csv(series: Sequence[tuple[int, float]]) -> str:
    return _csv_text([["iteration", "l1_delta"], *_convergence_rows(series)])


def render_convergence_markdown(series: Sequence[tuple[int, float]]) -> str:
    return _markdown_table(["iteration", "l1_delta"], _convergence_rows(series))


def _heatmap_rows(matrix: AggregateJudgmentMatrix) -> list[list[str]]:
    rows = []
    for i, judge in enumerate(matrix.model_ids):
        cells = [
            "" if cell is None else _num(cell) for cell in matrix.means[i]
        ]
        rows.append([judge, *cells])
    return rows


def render_heatmap_csv(matrix: AggregateJudgmentMatrix) -> str:
    header = ["judge_id", *matrix.model_ids]
    return _csv_text([header, *_heatmap_rows(matrix)])


def render_heatmap_markdown(matrix: AggregateJudgmentMatrix) -> str:
    header = ["judge_id", *matrix.model_ids]
    return _markdown_table(header, _heatmap_rows(matrix))


def _correlation_rows(entries: Sequence[CorrelationEntry]) -> list[list[str]]:
    return [
        [e.benchmark_name, _num(e.kendall), _num(e.spearman), str(e.n_common)]
        for e in entries
    ]


def render_correlations_csv(entries: Sequence[CorrelationEntry]) -> str:
    return _csv_text(
        [["benchmark", "kendall_tau", "spearman_rho", "n_common"],
         *_correlation_rows(entries)]
    )


def render_correlations_markdown(entries: Sequence[CorrelationEntry]) -> str:
    return _markdown_table(
        ["benchmark", "kendall_tau", "spearman_rho", "n_common"],
        _correlation_rows(entries),
    )


def write_report_files(bundle: ReportBundle, out_dir: Path | str, fmt: str) -> list[Path]:
    """Emit leaderboard/topics/convergence/heatmap files; returns their paths."""
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"format must be one of {REPORT_FORMATS}, got {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        contents = {
            "leaderboard.csv": render_leaderboard_csv(bundle.leaderboard),
            "topics.csv": render_topics_csv(bundle.topics),
            "convergence.csv": render_convergence_csv(bundle.convergence),
            "heatmap.csv": render_heatmap_csv(bundle.heatmap),
        }
    else:
        contents = {
            "leaderboard.md": render_leaderboard_markdown(bundle.leaderboard),
            "topics.md": render_topics_markdown(bundle.topics),
            "convergence.md": render_convergence_markdown(bundle.convergence),
            "heatmap.md": render_heatmap_markdown(bundle.heatmap),
        }
    paths = []
    for name, text in contents.items():
        path = out_dir / name
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        paths.append(path)
    return paths
