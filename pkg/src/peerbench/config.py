"""TOML configuration loading.

Two file shapes share a ``[run]`` table of RunConfig fields: endpoint files
declare ``[[models]]`` entries served over HTTP, agent files declare
``[[agents]]`` entries for the simulated backend. Credentials are only ever
named by environment variable, never written in configuration.
"""
from __future__ import annotations

import os
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

from .backends import HttpAgent, HttpEndpointSpec, SimulatedAgent, SimulatedAgentSpec
from .consensus import GateThresholds
from .engine import RegisteredModel, RunConfig


class ConfigError(ValueError):
    """A configuration file is malformed or incomplete."""


_RUN_KEYS = {
    "iterations": int,
    "lambda_mean": float,
    "lambda_median": float,
    "max_retries": int,
    "temperature": float,
    "top_p": float,
    "seed": int,
    "judge_mode": str,
    "max_in_flight": int,
    "log": str,
}

_MODEL_KEYS = {
    "model_id": str,
    "display_name": str,
    "base_url": str,
    "model_name": str,
    "api_key_env": str,
    "timeout_s": float,
    "max_in_flight": int,
}

_AGENT_KEYS = {
    "model_id": str,
    "display_name": str,
    "ability": float,
    "judge_noise_sd": float,
    "bias": float,
    "self_bias": float,
    "answer_noise_sd": float,
}


def _load_toml(path: Path | str) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: invalid TOML: {err}") from err


def _checked_table(table: dict, allowed: dict, where: str) -> dict:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    out = {}
    for key, value in table.items():
        want = allowed[key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, want) or isinstance(value, bool) and want is not bool:
            raise ConfigError(f"{where}: {key} must be {want.__name__}")
        out[key] = value
    return out


def run_config_from_table(table: dict, where: str = "[run]") -> RunConfig:
    """Build a RunConfig from a ``[run]`` table (missing keys keep defaults)."""
    values = _checked_table(table, _RUN_KEYS, where)
    values.pop("log", None)
    thresholds = GateThresholds(
        lambda_mean=values.pop("lambda_mean", GateThresholds().lambda_mean),
        lambda_median=values.pop("lambda_median", GateThresholds().lambda_median),
    )
    return RunConfig(thresholds=thresholds, **values)


def _run_section(data: dict, path: Path) -> tuple[RunConfig, str | None]:
    run_table = data.get("run", {})
    if not isinstance(run_table, dict):
        raise ConfigError(f"{path}: [run] must be a table")
    log_path = run_table.get("log")
    config = run_config_from_table(run_table, where=f"{path}: [run]")
    return config, log_path


def load_run_config(path: Path | str) -> tuple[RunConfig, list[RegisteredModel], str | None]:
    """Load an endpoint config: (RunConfig, HTTP-backed models, log path)."""
    path = Path(path)
    data = _load_toml(path)
    config, log_path = _run_section(data, path)
    entries = data.get("models")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{path}: needs at least one [[models]] entry")
    models = []
    for k, entry in enumerate(entries):
        where = f"{path}: [[models]] #{k + 1}"
        fields = _checked_table(entry, _MODEL_KEYS, where)
        for required in ("model_id", "base_url", "model_name"):
            if required not in fields:
                raise ConfigError(f"{where}: missing {required}")
        key_env = fields.get("api_key_env", "")
        if key_env and not os.environ.get(key_env):
            raise ConfigError(
                f"{where}: environment variable {key_env} is not set"
            )
        spec = HttpEndpointSpec(
            base_url=fields["base_url"],
            model_name=fields["model_name"],
            api_key_env=fields.get("api_key_env", ""),
            timeout_s=fields.get("timeout_s", 120.0),
            max_in_flight=fields.get("max_in_flight", 4),
        )
        models.append(
            RegisteredModel(
                model_id=fields["model_id"],
                backend=HttpAgent(spec),
                display_name=fields.get("display_name", ""),
            )
        )
    return config, models, log_path


def load_agents_file(path: Path | str) -> tuple[RunConfig, list[RegisteredModel], str | None]:
    """Load a simulated pool: (RunConfig, simulated models, log path)."""
    path = Path(path)
    data = _load_toml(path)
    config, log_path = _run_section(data, path)
    entries = data.get("agents")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{path}: needs at least one [[agents]] entry")
    models = []
    for k, entry in enumerate(entries):
        where = f"{path}: [[agents]] #{k + 1}"
        fields = _checked_table(entry, _AGENT_KEYS, where)
        if "model_id" not in fields or "ability" not in fields:
            raise ConfigError(f"{where}: missing model_id or ability")
        spec = SimulatedAgentSpec(
            ability=fields["ability"],
            judge_noise_sd=fields.get("judge_noise_sd", 0.0),
            bias=fields.get("bias", 0.0),
            self_bias=fields.get("self_bias", 0.0),
            answer_noise_sd=fields.get("answer_noise_sd", 0.0),
        )
        models.append(
            RegisteredModel(
                model_id=fields["model_id"],
                backend=SimulatedAgent(fields["model_id"], spec),
                display_name=fields.get("display_name", ""),
            )
        )
    return config, models, log_path
