"""Append-only log: ordering, durability, crash tolerance, resume state."""
import json

import pytest

from peerbench.runlog import (
    LogLocked,
    OutOfOrderEvent,
    RunLogError,
    RunLogWriter,
    SCHEMA_VERSION,
    SchemaMismatch,
    SnapshotMismatch,
    append_event,
    make_header,
    read_log,
    resume_state,
)

CONFIG = {
    "iterations": 4,
    "lambda_mean": 3.5,
    "lambda_median": 3.0,
    "max_retries": 3,
    "temperature": 0.8,
    "top_p": 0.9,
    "seed": 7,
    "judge_mode": "multi",
    "max_in_flight": 1,
}
REGISTRY = [
    {"model_id": "agent-01", "display_name": "agent-01"},
    {"model_id": "agent-02", "display_name": "agent-02"},
]


def header():
    return make_header(CONFIG, REGISTRY, master_seed=7, started_at="2026-01-01T00:00:00+00:00")


def state_event(t, weights=(0.5, 0.5)):
    return {
        "kind": "state_updated",
        "iteration": t,
        "rewards": [4.0, 3.0],
        "cumulative": [4.0, 3.0],
        "accepted_count": 1,
        "weights": list(weights),
        "draws": {"generator": t},
    }


def test_create_append_read(tmp_path):
    path = tmp_path / "run.jsonl"
    with RunLogWriter.create(path, header()) as writer:
        writer.append(state_event(1))
    log = read_log(path)
    assert log.header["master_seed"] == 7
    assert len(log.events) == 1
    assert log.events[0]["kind"] == "state_updated"
    assert log.iterations_completed() == 1


def test_create_refuses_existing_file(tmp_path):
    path = tmp_path / "run.jsonl"
    path.write_text("occupied")
    with pytest.raises(RunLogError):
        RunLogWriter.create(path, header())


def test_out_of_order_iteration_rejected(tmp_path):
    path = tmp_path / "run.jsonl"
    with RunLogWriter.create(path, header()) as writer:
        writer.append(state_event(1))
        with pytest.raises(OutOfOrderEvent):
            writer.append(state_event(3))
        writer.append(state_event(2))  # the valid successor still works


def test_events_after_terminal_must_open_next_iteration(tmp_path):
    path = tmp_path / "run.jsonl"
    with RunLogWriter.create(path, header()) as writer:
        writer.append({"kind": "iteration_started", "iteration": 1})
        writer.append(state_event(1))
        with pytest.raises(OutOfOrderEvent):
            writer.append({"kind": "task_generated", "iteration": 1,
                           "attempt": 1, "generator_id": "agent-01",
                           "topic": "math", "difficulty": "a", "question": "q"})
        writer.append({"kind": "iteration_started", "iteration": 2})


def test_unknown_kind_and_bad_iteration_rejected(tmp_path):
    path = tmp_path / "run.jsonl"
    with RunLogWriter.create(path, header()) as writer:
        with pytest.raises(SchemaMismatch):
            writer.append({"kind": "mystery", "iteration": 1})
        with pytest.raises(SchemaMismatch):
            writer.append({"kind": "iteration_started", "iteration": 0})


def test_single_writer_lock(tmp_path):
    path = tmp_path / "run.jsonl"
    writer = RunLogWriter.create(path, header())
    try:
        with pytest.raises(LogLocked):
            RunLogWriter.open_existing(path)
    finally:
        writer.close()
    # released lock allows reopening
    with RunLogWriter.open_existing(path) as again:
        again.append(state_event(1))


def test_reader_sees_flushed_events_mid_run(tmp_path):
    path = tmp_path / "run.jsonl"
    with RunLogWriter.create(path, header()) as writer:
        writer.append({"kind": "iteration_started", "iteration": 1})
        # independent read while the writer is still open
        live = read_log(path)
        assert [e["kind"] for e in live.events] == ["iteration_started"]


def test_append_event_one_shot(tmp_path):
    path = tmp_path / "run.jsonl"
    RunLogWriter.create(path, header()).close()
    append_event(path, state_event(1))
    assert read_log(path).iterations_completed() == 1


def test_truncation_at_every_byte_boundary(tmp_path):
    path = tmp_path / "run.jsonl"
    with RunLogWriter.create(path, header()) as writer:
        writer.append({"kind": "iteration_started", "iteration": 1})
        writer.append(state_event(1))
        writer.append({"kind": "iteration_started", "iteration": 2})
        writer.append({"kind": "iteration_skipped", "iteration": 2,
                       "reason": "qa_gate_rejected", "draws": {}})
        writer.append({"kind": "run_completed", "iteration": 2,
                       "accepted_count": 1, "draws": {}})
    raw = path.read_bytes()
    lines = raw.decode().splitlines()
    header_end = raw.index(b"\n") + 1
    for cut in range(len(raw) + 1):
        clipped = tmp_path / "clipped.jsonl"
        if clipped.exists():
            clipped.unlink()
        clipped.write_bytes(raw[:cut])
        if cut == 0 or cut < header_end:
            with pytest.raises(RunLogError):
                read_log(clipped)
            continue
        complete_lines = raw[:cut].count(b"\n")
        if raw[:cut].endswith(b"\n"):
            log = read_log(clipped)
        else:
            with pytest.warns(RuntimeWarning):
                log = read_log(clipped)
        # every fully written event survives, the partial tail is dropped
        assert len(log.events) == complete_lines - 1
        for k, event in enumerate(log.events):
            assert event == json.loads(lines[1 + k])


def test_corrupt_middle_line_is_an_error(tmp_path):
    path = tmp_path / "run.jsonl"
    with RunLogWriter.create(path, header()) as writer:
        writer.append(state_event(1))
        writer.append(state_event(2))
    lines = path.read_bytes().split(b"\n")
    lines[1] = lines[1][: len(lines[1]) // 2]  # mangle a non-final event
    mangled = tmp_path / "mangled.jsonl"
    mangled.write_bytes(b"\n".join(lines))
    with pytest.raises(RunLogError):
        read_log(mangled)


def test_schema_version_mismatch(tmp_path):
    path = tmp_path / "run.jsonl"
    bad = header()
    bad["schema_version"] = SCHEMA_VERSION + 1
    path.write_text(json.dumps(bad) + "\n")
    with pytest.raises(SchemaMismatch):
        read_log(path)


def test_missing_header_rejected(tmp_path):
    path = tmp_path / "run.jsonl"
    path.write_text("")
    with pytest.raises(RunLogError):
        read_log(path)
    path.write_text(json.dumps(state_event(1)) + "\n")
    with pytest.raises(RunLogError):
        read_log(path)


# -- resume state ---------------------------------------------------------------


def test_resume_after_zero_iterations_is_uniform(tmp_path):
    path = tmp_path / "run.jsonl"
    RunLogWriter.create(path, header()).close()
    restored = resume_state(read_log(path), CONFIG, REGISTRY)
    assert restored.weights == (0.5, 0.5)
    assert restored.cumulative == (0.0, 0.0)
    assert restored.accepted_count == 0
    assert restored.next_iteration == 1
    assert restored.draw_counts == {}


def test_resume_reconstructs_last_state(tmp_path):
    path = tmp_path / "run.jsonl"
    with RunLogWriter.create(path, header()) as writer:
        writer.append(state_event(1, weights=(0.6, 0.4)))
        writer.append({"kind": "iteration_skipped", "iteration": 2,
                       "reason": "qa_gate_rejected", "draws": {"generator": 5}})
    restored = resume_state(read_log(path), CONFIG, REGISTRY)
    assert restored.weights == (0.6, 0.4)
    assert restored.next_iteration == 3
    assert restored.draw_counts == {"generator": 5}


def test_resume_refuses_altered_registry(tmp_path):
    path = tmp_path / "run.jsonl"
    RunLogWriter.create(path, header()).close()
    altered = [REGISTRY[0], {"model_id": "intruder", "display_name": "intruder"}]
    with pytest.raises(SnapshotMismatch):
        resume_state(read_log(path), CONFIG, altered)


def test_resume_refuses_altered_config_but_allows_new_target(tmp_path):
    path = tmp_path / "run.jsonl"
    RunLogWriter.create(path, header()).close()
    log = read_log(path)
    changed = dict(CONFIG, seed=8)
    with pytest.raises(SnapshotMismatch):
        resume_state(log, changed, REGISTRY)
    extended = dict(CONFIG, iterations=40, max_in_flight=8)
    assert resume_state(log, extended, REGISTRY).next_iteration == 1


def test_run_completed_does_not_close_the_log(tmp_path):
    path = tmp_path / "run.jsonl"
    with RunLogWriter.create(path, header()) as writer:
        writer.append(state_event(1))
        writer.append({"kind": "run_completed", "iteration": 1,
                       "accepted_count": 1, "draws": {}})
    with RunLogWriter.open_existing(path) as writer:
        writer.append({"kind": "iteration_started", "iteration": 2})
    assert [e["kind"] for e in read_log(path).events] == [
        "state_updated", "run_completed", "iteration_started"
    ]
