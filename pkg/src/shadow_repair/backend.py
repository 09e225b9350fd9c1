"""Patch-generating model backends behind one interface.

Three kinds ship: a wire client for a locally hosted inference server, a
replay backend that returns recorded completions, and a seeded stochastic
backend for experiments. No model weights are bundled and no remote calls
are made: every shipped configuration is local-only.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING
from urllib.parse import urlparse

import httpx

from .prompting import prompt_digest

if TYPE_CHECKING:
    from .prompting import Prompt

LOCAL_HOSTS = {"localhost", "127.0.0.1", "::1"}

_FENCE_RE = re.compile(r"^\s*```[\w+-]*\s*$")
_CODE_CHARS = set(";{}()=<>#[]")


class BackendError(RuntimeError):
    """Base for failures that count as a failed repair attempt, not a crash."""


class BackendUnavailable(BackendError):
    """Connection or timeout talking to the inference server."""


class EmptyCompletion(BackendError):
    """The model returned nothing usable."""


class InvalidConfig(ValueError):
    """Backend or model configuration rejected."""


@dataclass(frozen=True)
class ModelConfig:
    """Metadata and generation parameters for one model."""

    name: str
    trained_on_code: bool
    parameter_size: int = 7_000_000_000
    endpoint: str | None = None
    max_tokens: int = 4096
    temperature: float = 0.2
    local_only: bool = True


# The four 7B-class models used for repair experiments. All run locally;
# confidential source never leaves the build host.
MODEL_REGISTRY: dict[str, ModelConfig] = {
    cfg.name: cfg
    for cfg in (
        ModelConfig(name="codet5p", trained_on_code=True),
        ModelConfig(name="codellama", trained_on_code=True),
        ModelConfig(name="falcon", trained_on_code=False),
        ModelConfig(name="bloom", trained_on_code=False),
    )
}


def get_model(name: str, endpoint: str | None = None) -> ModelConfig:
    try:
        cfg = MODEL_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(MODEL_REGISTRY))
        raise InvalidConfig(f"unknown model {name!r} (registered: {known})") from None
    if endpoint:
        cfg = replace(cfg, endpoint=endpoint)
    return cfg


@dataclass(frozen=True)
class PatchCandidate:
    """One sanitized model completion: the proposed replacement segment."""

    text: str
    model: str
    latency: float
    iteration: int


def sanitize_completion(text: str) -> str:
    """Strip code fences and leading prose, keeping the code itself intact.

    If the completion contains a fenced block, only the first block's content
    survives. Otherwise leading lines that read as natural language (no code
    punctuation, ending in ':' or '.') are dropped. Interior blank lines are
    preserved; trailing whitespace is not.
    """
    lines = text.split("\n")
    fence_indexes = [i for i, line in enumerate(lines) if _FENCE_RE.match(line)]
    if len(fence_indexes) >= 2:
        lines = lines[fence_indexes[0] + 1 : fence_indexes[1]]
    elif fence_indexes:
        lines = [l for i, l in enumerate(lines) if i != fence_indexes[0]]
    while lines and _looks_like_prose(lines[0]):
        lines = lines[1:]
    while lines and not lines[0].strip():
        lines = lines[1:]
    return "\n".join(lines).rstrip()


def _looks_like_prose(line: str) -> bool:
    stripped = line.strip()
    if not stripped:
        return False
    if _CODE_CHARS & set(stripped):
        return False
    return stripped.endswith((":", "."))


class ReplayBackend:
    """Returns recorded completions keyed by (prompt digest, iteration).

    Bit-deterministic: identical (prompt, iteration) always yields the
    identical candidate. Missing entries surface as EmptyCompletion.
    """

    kind = "replay"

    def __init__(self, entries: dict[tuple[str, int], str]):
        self._entries = entries

    @classmethod
    def from_fixture(cls, path: str | Path) -> "ReplayBackend":
        try:
            data = json.loads(Path(path).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"replay fixture {path}: {exc}") from exc
        entries = {}
        for i, entry in enumerate(data.get("entries", ())):
            try:
                entries[(entry["prompt_digest"], int(entry["iteration"]))] = entry["completion"]
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidConfig(f"replay fixture {path}: entry {i}: {exc}") from exc
        return cls(entries)

    def generate(
        self, prompt: "Prompt", model: ModelConfig, iteration: int, session_id: str = ""
    ) -> PatchCandidate:
        started = time.perf_counter()
        key = (prompt_digest(prompt), iteration)
        completion = self._entries.get(key)
        if completion is None:
            raise EmptyCompletion(f"no replay entry for digest {key[0][:12]}… iteration {iteration}")
        return _candidate(completion, model, iteration, started)


class StochasticBackend:
    """Succeeds with fixed probability per attempt; successes return the
    ground-truth fix for the prompt, misses return a never-compiling patch.

    Draw sequences are seeded per session id, so a fixed (seed, session)
    pair replays the identical success/failure sequence across runs and
    concurrent sessions do not perturb one another.
    """

    kind = "stochastic"

    def __init__(self, seed: int, success_probability: float, ground_truth: dict[str, str]):
        if not 0.0 <= success_probability <= 1.0:
            raise InvalidConfig(
                f"success probability must be within [0, 1], got {success_probability}"
            )
        self.seed = seed
        self.success_probability = success_probability
        self._truth = ground_truth
        self._rngs: dict[str, random.Random] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_config(cls, config: dict) -> "StochasticBackend":
        truth = config.get("ground_truth", {})
        if isinstance(truth, (str, Path)):
            try:
                truth = json.loads(Path(truth).read_text("utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise InvalidConfig(f"ground-truth table: {exc}") from exc
        try:
            return cls(
                seed=int(config["seed"]),
                success_probability=float(config["success_probability"]),
                ground_truth=dict(truth),
            )
        except KeyError as exc:
            raise InvalidConfig(f"stochastic backend needs {exc.args[0]}") from exc

    def _rng(self, session_id: str) -> random.Random:
        with self._lock:
            rng = self._rngs.get(session_id)
            if rng is None:
                digest = hashlib.sha256(f"{self.seed}|{session_id}".encode()).digest()
                rng = random.Random(int.from_bytes(digest[:8], "big"))
                self._rngs[session_id] = rng
            return rng

    def generate(
        self, prompt: "Prompt", model: ModelConfig, iteration: int, session_id: str = ""
    ) -> PatchCandidate:
        started = time.perf_counter()
        if self._rng(session_id).random() < self.success_probability:
            completion = self._truth.get(prompt_digest(prompt))
            if completion is None:
                raise EmptyCompletion("no ground-truth fix recorded for this prompt")
            return _candidate(completion, model, iteration, started)
        # guaranteed to fail both compilation and token comparison
        miss = f'#error unresolved automated repair attempt {iteration}'
        return _candidate(miss, model, iteration, started)


class WireBackend:
    """HTTP client for a locally hosted completion server.

    Protocol: POST to the endpoint with a JSON object carrying the prompt,
    token limit and temperature; the reply carries the completion under a
    (configurable, possibly dotted) response field. Field names default to
    {"prompt", "max_tokens", "temperature"} -> {"text"}.
    """

    kind = "wire"

    def __init__(
        self,
        endpoint: str,
        *,
        timeout: float = 60.0,
        max_inflight: int = 4,
        prompt_field: str = "prompt",
        max_tokens_field: str = "max_tokens",
        temperature_field: str = "temperature",
        response_field: str = "text",
        local_only: bool = True,
    ):
        parsed = urlparse(endpoint)
        if parsed.scheme not in ("http", "https") or not parsed.hostname:
            raise InvalidConfig(f"malformed endpoint URL {endpoint!r}")
        if local_only and parsed.hostname not in LOCAL_HOSTS:
            raise InvalidConfig(
                f"endpoint host {parsed.hostname!r} is not local; remote inference is disabled"
            )
        self.endpoint = endpoint
        self.timeout = timeout
        self.fields = (prompt_field, max_tokens_field, temperature_field)
        self.response_field = response_field
        self._slots = threading.Semaphore(max_inflight)

    def generate(
        self, prompt: "Prompt", model: ModelConfig, iteration: int, session_id: str = ""
    ) -> PatchCandidate:
        started = time.perf_counter()
        endpoint = model.endpoint or self.endpoint
        prompt_field, max_tokens_field, temperature_field = self.fields
        payload = {
            prompt_field: prompt.text,
            max_tokens_field: model.max_tokens,
            temperature_field: model.temperature,
        }
        with self._slots:
            try:
                response = httpx.post(endpoint, json=payload, timeout=self.timeout)
                response.raise_for_status()
                body = response.json()
            except (httpx.HTTPError, json.JSONDecodeError) as exc:
                raise BackendUnavailable(f"{endpoint}: {exc}") from exc
        completion = _dig(body, self.response_field)
        if not isinstance(completion, str):
            raise EmptyCompletion(f"response field {self.response_field!r} missing or not text")
        return _candidate(completion, model, iteration, started)


def _dig(body: object, dotted: str) -> object:
    value = body
    for part in dotted.split("."):
        if isinstance(value, list) and part.isdigit():
            value = value[int(part)] if int(part) < len(value) else None
        elif isinstance(value, dict):
            value = value.get(part)
        else:
            return None
    return value


def _candidate(completion: str, model: ModelConfig, iteration: int, started: float) -> PatchCandidate:
    text = sanitize_completion(completion)
    if not text.strip():
        raise EmptyCompletion("completion empty after sanitization")
    return PatchCandidate(
        text=text,
        model=model.name,
        latency=time.perf_counter() - started,
        iteration=iteration,
    )


Backend = ReplayBackend | StochasticBackend | WireBackend

BACKEND_KINDS = ("wire", "replay", "stochastic")


def register_backend(kind: str, config: dict) -> Backend:
    """Build a backend handle from its kind and configuration dict."""
    if kind == "replay":
        fixture = config.get("fixture")
        if not fixture:
            raise InvalidConfig("replay backend needs a 'fixture' path")
        return ReplayBackend.from_fixture(fixture)
    if kind == "stochastic":
        return StochasticBackend.from_config(config)
    if kind == "wire":
        endpoint = config.get("endpoint")
        if not endpoint:
            raise InvalidConfig("wire backend needs an 'endpoint' URL")
        kwargs = {
            k: config[k]
            for k in (
                "timeout",
                "max_inflight",
                "prompt_field",
                "max_tokens_field",
                "temperature_field",
                "response_field",
                "local_only",
            )
            if k in config
        }
        return WireBackend(endpoint, **kwargs)
    raise InvalidConfig(f"unknown backend kind {kind!r} (expected one of {BACKEND_KINDS})")
