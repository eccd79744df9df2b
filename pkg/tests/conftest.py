"""Shared test helpers: simulated registries and log normalization."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import pytest

from peerbench.backends import SimulatedAgent, SimulatedAgentSpec
from peerbench.engine import ModelRegistry, RegisteredModel

DATA_DIR = Path(__file__).parent / "data"


def simulated_registry(
    abilities: Sequence[float],
    judge_noise_sd: float = 0.35,
    **spec_overrides,
) -> ModelRegistry:
    """A registry of simulated agents named agent-01, agent-02, ..."""
    models = []
    for i, ability in enumerate(abilities, start=1):
        model_id = f"agent-{i:02d}"
        spec = SimulatedAgentSpec(
            ability=ability, judge_noise_sd=judge_noise_sd, **spec_overrides
        )
        models.append(RegisteredModel(model_id, SimulatedAgent(model_id, spec)))
    return ModelRegistry(models)


def normalized_log_lines(path: Path | str) -> list[str]:
    """Log lines with the header timestamp (the run's only one) masked."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    header["started_at"] = "<normalized>"
    return [json.dumps(header, sort_keys=True)] + lines[1:]


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR
