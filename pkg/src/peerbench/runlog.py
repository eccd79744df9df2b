"""Append-only JSONL run log.

One JSON object per line (UTF-8, LF, sorted keys): a header describing the
run, then strictly iteration-ordered events. Appends are flushed and fsynced
so an independent process can tail a live run and a crash can only cost the
trailing partial line, which the reader drops with a warning. A lock file
enforces a single writer; resume rebuilds engine state from the events.
"""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from filelock import FileLock, Timeout

SCHEMA_VERSION = 1

EVENT_KINDS = frozenset(
    {
        "iteration_started",
        "task_generated",
        "task_gated",
        "answers_collected",
        "judgments_collected",
        "state_updated",
        "iteration_skipped",
        "run_completed",
    }
)

# Events that close an iteration; exactly one of these per iteration.
TERMINAL_KINDS = frozenset({"state_updated", "iteration_skipped"})

# Config keys a resumed run may legitimately change: the iteration target is
# the extension parameter, and concurrency level does not affect results.
RESUME_IGNORED_CONFIG_KEYS = frozenset({"iterations", "max_in_flight"})


class RunLogError(Exception):
    """The log file or an appended event violates the log contract."""


class SchemaMismatch(RunLogError):
    """Unknown schema version or event shape."""


class OutOfOrderEvent(RunLogError):
    """An event's iteration does not follow the log's current position."""


class SnapshotMismatch(RunLogError):
    """Resume inputs do not match the header's recorded snapshots."""


class LogLocked(RunLogError):
    """Another writer holds the log."""


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def make_header(
    config_snapshot: dict,
    registry_snapshot: list[dict],
    master_seed: int,
    started_at: Optional[str] = None,
) -> dict:
    """Build the immutable first line of a run log.

    started_at is the run's only timestamp; determinism comparisons between
    logs must normalize it away.
    """
    if started_at is None:
        started_at = datetime.now(timezone.utc).isoformat()
    return {
        "kind": "header",
        "schema_version": SCHEMA_VERSION,
        "master_seed": master_seed,
        "started_at": started_at,
        "config": dict(config_snapshot),
        "registry": [dict(entry) for entry in registry_snapshot],
    }


class RunLogWriter:
    """Single-writer append handle with iteration-order validation."""

    def __init__(self, path: Path, _file, _lock, last_iteration: int, terminal_seen: bool):
        self.path = path
        self._file = _file
        self._lock = _lock
        self._last_iteration = last_iteration
        self._terminal_seen = terminal_seen
        self._closed = False

    @classmethod
    def create(cls, path: Path | str, header: dict) -> "RunLogWriter":
        """Start a fresh log; refuses to clobber an existing file."""
        path = Path(path)
        if header.get("kind") != "header" or header.get("schema_version") != SCHEMA_VERSION:
            raise SchemaMismatch("header must carry kind='header' and the current schema_version")
        if path.exists():
            raise RunLogError(f"log file already exists: {path}")
        lock = _acquire_lock(path)
        try:
            file = open(path, "x", encoding="utf-8", newline="\n")
        except Exception:
            lock.release()
            raise
        writer = cls(path, file, lock, last_iteration=0, terminal_seen=False)
        writer._write_line(header)
        return writer

    @classmethod
    def open_existing(cls, path: Path | str) -> "RunLogWriter":
        """Reopen a log for appending, recovering the validation state."""
        path = Path(path)
        log = read_log(path)
        lock = _acquire_lock(path)
        try:
            file = open(path, "a", encoding="utf-8", newline="\n")
        except Exception:
            lock.release()
            raise
        last, terminal = 0, False
        for event in log.events:
            if event["kind"] == "run_completed":
                continue
            last = event["iteration"]
            terminal = event["kind"] in TERMINAL_KINDS
        return cls(path, file, lock, last_iteration=last, terminal_seen=terminal)

    def append(self, event: dict) -> None:
        """Validate ordering and durably append one event."""
        if self._closed:
            raise RunLogError("writer is closed")
        kind = event.get("kind")
        if kind not in EVENT_KINDS:
            raise SchemaMismatch(f"unknown event kind {kind!r}")
        iteration = event.get("iteration")
        if not isinstance(iteration, int) or iteration < 1:
            raise SchemaMismatch("events must carry a positive integer iteration")
        if kind == "run_completed":
            if iteration != self._last_iteration:
                raise OutOfOrderEvent(
                    f"run_completed for iteration {iteration} but log is at "
                    f"{self._last_iteration}"
                )
        elif iteration == self._last_iteration + 1:
            self._last_iteration = iteration
            self._terminal_seen = False
        elif iteration == self._last_iteration and not self._terminal_seen:
            pass
        else:
            raise OutOfOrderEvent(
                f"event for iteration {iteration} cannot follow iteration "
                f"{self._last_iteration}"
                + (" (already closed)" if self._terminal_seen else "")
            )
        if kind in TERMINAL_KINDS:
            self._terminal_seen = True
        self._write_line(event)

    def _write_line(self, obj: dict) -> None:
        self._file.write(_dumps(obj) + "\n")
        self._file.flush()
        os.fsync(self._file.fileno())

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._file.close()
        self._lock.release()

    def __enter__(self) -> "RunLogWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _acquire_lock(path: Path) -> FileLock:
    lock = FileLock(str(path) + ".lock")
    try:
        lock.acquire(timeout=0)
    except Timeout as err:
        raise LogLocked(f"another writer holds {path}") from err
    return lock


def append_event(log_path: Path | str, event: dict) -> None:
    """One-shot append to an existing log (opens, validates, fsyncs, closes)."""
    with RunLogWriter.open_existing(log_path) as writer:
        writer.append(event)


@dataclass(frozen=True)
class AcceptedRound:
    """Everything recorded for one accepted iteration."""

    iteration: int
    generator_id: str
    topic: str
    difficulty: str
    question: str
    scores: tuple[tuple[Optional[float], ...], ...]
    rewards: tuple[float, ...]
    cumulative: tuple[float, ...]
    accepted_count: int
    weights: tuple[float, ...]


@dataclass
class RunLog:
    """A parsed run: immutable header plus ordered events."""

    header: dict
    events: list[dict]
    path: Optional[Path] = None

    @property
    def config(self) -> dict:
        return self.header["config"]

    @property
    def master_seed(self) -> int:
        return self.header["master_seed"]

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(entry["model_id"] for entry in self.header["registry"])

    @property
    def n_models(self) -> int:
        return len(self.header["registry"])

    def iterations_completed(self) -> int:
        last = 0
        for event in self.events:
            if event["kind"] in TERMINAL_KINDS:
                last = event["iteration"]
        return last

    def final_state(self) -> tuple[tuple[float, ...], int, tuple[float, ...]]:
        """(cumulative scores, accepted count, weights) after the last event."""
        n = self.n_models
        cumulative = (0.0,) * n
        count = 0
        weights = (1.0 / n,) * n
        for event in self.events:
            if event["kind"] == "state_updated":
                cumulative = tuple(event["cumulative"])
                count = event["accepted_count"]
                weights = tuple(event["weights"])
        return cumulative, count, weights

    def draw_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for event in self.events:
            if "draws" in event:
                counts = dict(event["draws"])
        return counts

    def weight_series(self) -> list[tuple[float, ...]]:
        """w before iteration 1, then after every iteration (skips repeat w)."""
        series = [(1.0 / self.n_models,) * self.n_models]
        for event in self.events:
            if event["kind"] == "state_updated":
                series.append(tuple(event["weights"]))
            elif event["kind"] == "iteration_skipped":
                series.append(series[-1])
        return series

    def accepted_rounds(self) -> list[AcceptedRound]:
        rounds: list[AcceptedRound] = []
        task: Optional[dict] = None
        scores: Optional[list] = None
        for event in self.events:
            kind = event["kind"]
            if kind == "iteration_started":
                task, scores = None, None
            elif kind == "task_generated":
                task = event
            elif kind == "judgments_collected":
                scores = event["scores"]
            elif kind == "state_updated":
                if task is None or scores is None:
                    raise RunLogError(
                        f"state_updated at iteration {event['iteration']} lacks "
                        "a recorded task or judgment matrix"
                    )
                rounds.append(
                    AcceptedRound(
                        iteration=event["iteration"],
                        generator_id=task["generator_id"],
                        topic=task["topic"],
                        difficulty=task["difficulty"],
                        question=task["question"],
                        scores=tuple(tuple(row) for row in scores),
                        rewards=tuple(event["rewards"]),
                        cumulative=tuple(event["cumulative"]),
                        accepted_count=event["accepted_count"],
                        weights=tuple(event["weights"]),
                    )
                )
        return rounds


def read_log(path: Path | str) -> RunLog:
    """Parse a log file, tolerating only a truncated trailing line."""
    path = Path(path)
    raw = path.read_bytes()
    if not raw:
        raise RunLogError(f"{path}: empty file, missing header")
    complete, sep, tail = raw.rpartition(b"\n")
    if not sep:
        raise RunLogError(f"{path}: missing or truncated header")
    if tail:
        warnings.warn(
            f"{path}: dropping truncated trailing event ({len(tail)} bytes)",
            RuntimeWarning,
            stacklevel=2,
        )
    lines = complete.split(b"\n")
    try:
        header = json.loads(lines[0])
    except ValueError as err:
        raise RunLogError(f"{path}: corrupt header: {err}") from err
    if not isinstance(header, dict) or header.get("kind") != "header":
        raise RunLogError(f"{path}: first line is not a run header")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(
            f"{path}: schema_version {header.get('schema_version')!r}, "
            f"expected {SCHEMA_VERSION}"
        )
    events = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            event = json.loads(line)
        except ValueError as err:
            raise RunLogError(f"{path}: corrupt event at line {lineno}: {err}") from err
        if not isinstance(event, dict) or event.get("kind") not in EVENT_KINDS:
            raise SchemaMismatch(f"{path}: unknown event at line {lineno}")
        events.append(event)
    return RunLog(header=header, events=events, path=path)


@dataclass(frozen=True)
class ResumeState:
    """Engine state reconstructed from a log, ready to continue the run."""

    cumulative: tuple[float, ...]
    accepted_count: int
    weights: tuple[float, ...]
    next_iteration: int
    draw_counts: dict[str, int] = field(hash=False, default_factory=dict)


def resume_state(
    log: RunLog, config_snapshot: dict, registry_snapshot: list[dict]
) -> ResumeState:
    """Validate snapshots and reconstruct the continuation point.

    The iteration target (and concurrency level) may differ between the
    original run and the resume; every other config field and the full
    registry must match exactly, otherwise the resume is refused.
    """
    recorded_registry = log.header["registry"]
    if recorded_registry != [dict(entry) for entry in registry_snapshot]:
        raise SnapshotMismatch(
            f"registry mismatch: log has {recorded_registry!r}, "
            f"current is {registry_snapshot!r}"
        )
    recorded = {
        k: v for k, v in log.config.items() if k not in RESUME_IGNORED_CONFIG_KEYS
    }
    current = {
        k: v for k, v in config_snapshot.items() if k not in RESUME_IGNORED_CONFIG_KEYS
    }
    if recorded != current:
        diffs = sorted(
            k
            for k in set(recorded) | set(current)
            if recorded.get(k) != current.get(k)
        )
        raise SnapshotMismatch(f"config mismatch on {', '.join(diffs)}")
    cumulative, count, weights = log.final_state()
    return ResumeState(
        cumulative=cumulative,
        accepted_count=count,
        weights=weights,
        next_iteration=log.iterations_completed() + 1,
        draw_counts=log.draw_counts(),
    )
