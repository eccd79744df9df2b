"""Agent backends.

Two implementations of the same completion interface: deterministic
simulated agents for desk-scale runs (quality is carried as machine-readable
payload tags, so judging needs no language understanding), and a client for
OpenAI-compatible chat-completion endpoints.
"""
from __future__ import annotations

import math
import os
import re
import threading
from dataclasses import dataclass
from typing import Optional, Protocol

import requests

from .consensus import ContractViolation
from .streams import CountingStream


class AgentBackend(Protocol):
    """Anything that can turn a prompt into a completion."""

    def complete(
        self,
        prompt: str,
        *,
        temperature: float,
        top_p: float,
        rng: Optional[CountingStream] = None,
    ) -> str:
        ...


class TransportError(Exception):
    """A completion could not be obtained from the backend."""


class TransportTimeout(TransportError):
    """The endpoint did not reply within the configured timeout."""


class BadStatus(TransportError):
    """The endpoint replied with a non-2xx HTTP status."""

    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"HTTP {status}" + (f": {detail}" if detail else ""))
        self.status = status


class MalformedReply(TransportError):
    """The endpoint replied 2xx but the body is not a usable completion."""


KIND_TASK_GEN = "task_gen"
KIND_ANSWER = "answer"
KIND_TASK_RANK = "task_rank"
KIND_ANSWER_RANK = "answer_rank"

_KIND_PREFIXES = (
    ("Generate ", KIND_TASK_GEN),
    ("Answer the question", KIND_ANSWER),
    ("Evaluate the quality of the question", KIND_TASK_RANK),
    ("You are an expert evaluator.", KIND_ANSWER_RANK),
)


def classify_prompt(prompt: str) -> str:
    """Map a rendered prompt back to its pipeline role by its opening text."""
    for prefix, kind in _KIND_PREFIXES:
        if prompt.startswith(prefix):
            return kind
    raise ContractViolation("unrecognized prompt shape")


@dataclass(frozen=True)
class SimulatedAgentSpec:
    """Latent behavior of one synthetic participant.

    ability is the latent quality of everything the agent produces;
    judge_noise_sd jitters the scores it hands out; bias shifts all its
    scores, self_bias only the score for its own answer; answer_noise_sd
    jitters the quality of individual tasks/answers around ability.
    """

    ability: float
    judge_noise_sd: float = 0.0
    bias: float = 0.0
    self_bias: float = 0.0
    answer_noise_sd: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.ability <= 1.0:
            raise ContractViolation("ability must lie in [0, 1]")
        if self.judge_noise_sd < 0.0 or self.answer_noise_sd < 0.0:
            raise ContractViolation("noise standard deviations must be >= 0")
        for value in (self.judge_noise_sd, self.bias, self.self_bias, self.answer_noise_sd):
            if not math.isfinite(value):
                raise ContractViolation("spec fields must be finite")


# Payload tags let simulated judges recover the latent quality and author
# of the artifact under evaluation straight from the rendered prompt.
_TASK_TAG_RE = re.compile(r"\[\[task by=(\S+) q=([0-9.eE+-]+)\]\]")
_ANSWER_TAG_RE = re.compile(r"\[\[answer by=(\S+) q=([0-9.eE+-]+)\]\]")

_GENERATE_RE = re.compile(
    r"^Generate (a very difficult|a difficult|a) question about ([a-z ]+)\."
)


def _quantize_score(x: float) -> int:
    # round half up, then clamp to the 1..5 scale
    return int(min(5, max(1, math.floor(x + 0.5))))


def simulated_complete(
    model_id: str,
    spec: SimulatedAgentSpec,
    prompt_kind: str,
    payload: dict,
    rng: CountingStream,
) -> str:
    """Produce the synthetic completion for one classified prompt.

    Every call consumes exactly one draw from ``rng`` regardless of
    parameters, so run-level draw counts depend only on the call sequence.
    """
    if rng is None:
        raise ContractViolation("simulated agents require a random stream")
    if prompt_kind == KIND_TASK_GEN:
        quality = min(1.0, max(0.0, spec.ability + rng.gauss(spec.answer_noise_sd)))
        return (
            f"[[task by={model_id} q={quality!r}]] "
            f"A synthetic {payload['topic']} exercise pitched as "
            f"'{payload['difficulty']}' by {model_id}."
        )
    if prompt_kind == KIND_ANSWER:
        quality = min(1.0, max(0.0, spec.ability + rng.gauss(spec.answer_noise_sd)))
        return (
            f"[[answer by={model_id} q={quality!r}]] "
            f"A synthetic answer from {model_id}."
        )
    if prompt_kind in (KIND_TASK_RANK, KIND_ANSWER_RANK):
        latent = 1.0 + 4.0 * payload["quality"]
        latent += spec.bias
        if payload["author"] == model_id:
            latent += spec.self_bias
        latent += rng.gauss(spec.judge_noise_sd)
        return f"<rank>{_quantize_score(latent)}</rank>"
    raise ContractViolation(f"unknown prompt kind {prompt_kind!r}")


class SimulatedAgent:
    """Deterministic synthetic participant driving the full pipeline.

    The agent infers what is being asked of it from the rendered prompt
    itself, so the orchestrator stays backend-agnostic.
    """

    def __init__(self, model_id: str, spec: SimulatedAgentSpec):
        if not model_id:
            raise ContractViolation("model_id must be non-empty")
        self.model_id = model_id
        self.spec = spec

    def complete(
        self,
        prompt: str,
        *,
        temperature: float,
        top_p: float,
        rng: Optional[CountingStream] = None,
    ) -> str:
        del temperature, top_p  # sampling knobs have no simulated analogue
        if rng is None:
            raise ContractViolation("simulated agents require a random stream")
        kind = classify_prompt(prompt)
        payload = self._extract_payload(kind, prompt)
        return simulated_complete(self.model_id, self.spec, kind, payload, rng)

    def _extract_payload(self, kind: str, prompt: str) -> dict:
        if kind == KIND_TASK_GEN:
            match = _GENERATE_RE.match(prompt)
            if match is None:
                raise ContractViolation("malformed task-generation prompt")
            return {"difficulty": match.group(1), "topic": match.group(2)}
        if kind == KIND_ANSWER:
            return {}
        tag_re = _TASK_TAG_RE if kind == KIND_TASK_RANK else _ANSWER_TAG_RE
        match = tag_re.search(prompt)
        if match is None:
            raise ContractViolation(
                "simulated judges need payload-tagged artifacts to rate"
            )
        return {"author": match.group(1), "quality": float(match.group(2))}


@dataclass(frozen=True)
class HttpEndpointSpec:
    """Connection details for one OpenAI-compatible endpoint.

    api_key_env names an environment variable; key material itself never
    appears in configuration, logs, or errors.
    """

    base_url: str
    model_name: str
    api_key_env: str = ""
    timeout_s: float = 120.0
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if not self.base_url.startswith(("http://", "https://")):
            raise ContractViolation("base_url must be an http(s) URL")
        if not self.model_name:
            raise ContractViolation("model_name must be non-empty")
        if self.timeout_s <= 0:
            raise ContractViolation("timeout_s must be positive")
        if self.max_in_flight < 1:
            raise ContractViolation("max_in_flight must be >= 1")


class HttpAgent:
    """Client for the ``/chat/completions`` route of one endpoint.

    A per-endpoint semaphore caps concurrent requests; transient failures
    (timeout, connection error, 5xx) get exactly one retry, client errors
    none, so a single call never issues more than two requests.
    """

    def __init__(self, spec: HttpEndpointSpec, session: Optional[requests.Session] = None):
        self.spec = spec
        self._session = session or requests.Session()
        self._gate = threading.BoundedSemaphore(spec.max_in_flight)

    def complete(
        self,
        prompt: str,
        *,
        temperature: float,
        top_p: float,
        rng: Optional[CountingStream] = None,
    ) -> str:
        del rng  # real endpoints own their sampling
        url = self.spec.base_url.rstrip("/") + "/chat/completions"
        headers = {}
        if self.spec.api_key_env:
            key = os.environ.get(self.spec.api_key_env, "")
            if not key:
                raise TransportError(
                    f"environment variable {self.spec.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.spec.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "top_p": top_p,
        }
        failure: TransportError
        for attempt in (1, 2):
            with self._gate:
                try:
                    response = self._session.post(
                        url, json=body, headers=headers, timeout=self.spec.timeout_s
                    )
                except requests.Timeout as err:
                    failure = TransportTimeout(str(err))
                except requests.RequestException as err:
                    failure = TransportError(str(err))
                else:
                    if 200 <= response.status_code < 300:
                        return _extract_content(response)
                    failure = BadStatus(response.status_code, response.text[:200])
                    if response.status_code < 500:
                        raise failure  # client errors are not transient
            if attempt == 2:
                break
        raise failure


def _extract_content(response: requests.Response) -> str:
    try:
        data = response.json()
    except ValueError as err:
        raise MalformedReply(f"response body is not JSON: {err}") from err
    try:
        content = data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as err:
        raise MalformedReply(f"response lacks choices[0].message.content: {err}") from err
    if not isinstance(content, str):
        raise MalformedReply("completion content is not text")
    return content
