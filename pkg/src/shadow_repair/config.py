"""Run configuration: one JSON file wiring archive, taxonomy, prompt
template, backend, CI adapter and output paths together."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .backend import Backend, InvalidConfig, register_backend
from .diagnostics import ErrorCategory, default_taxonomy, load_taxonomy
from .fixmine import BuildArchive
from .prompting import UnknownRecipe, load_template, recipe_inputs
from .shadow import CIAdapter, ConfigError, ShadowJob

MAX_ITERATION_RANGE = (1, 10)


@dataclass(frozen=True)
class RunConfig:
    archive: Path
    backend: dict
    ci: CIAdapter
    results: Path
    model: str = "codellama"
    recipe: int = 6
    max_iterations: int = 5
    seed: int = 0
    taxonomy: Path | None = None
    template: Path | None = None
    stack_patches: bool = False
    workspace_root: Path | None = None
    error_cap: int = 3
    context_lines: int = 3


def load_run_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read and validate a run configuration file; ``overrides`` (typically
    CLI flags) win over file values."""
    path = Path(path)
    try:
        data = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})

    base = path.parent

    def resolve(key: str, required: bool = False) -> Path | None:
        value = data.get(key)
        if value is None:
            if required:
                raise ConfigError(f"{path}: missing required key {key!r}")
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    archive = resolve("archive", required=True)
    if not archive.is_dir():
        raise ConfigError(f"{path}: archive directory {archive} does not exist")
    for key in ("taxonomy", "template"):
        p = resolve(key)
        if p is not None and not p.is_file():
            raise ConfigError(f"{path}: {key} file {p} does not exist")

    recipe = int(data.get("recipe", 6))
    try:
        recipe_inputs(recipe)
    except UnknownRecipe as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    max_iterations = int(data.get("max_iterations", 5))
    lo, hi = MAX_ITERATION_RANGE
    if not lo <= max_iterations <= hi:
        raise ConfigError(f"{path}: max_iterations must be in {lo}..{hi}, got {max_iterations}")

    backend_cfg = data.get("backend")
    if not isinstance(backend_cfg, dict) or "kind" not in backend_cfg:
        raise ConfigError(f"{path}: backend must be an object with a 'kind'")
    backend_cfg = dict(backend_cfg)
    for key in ("fixture", "ground_truth"):
        if isinstance(backend_cfg.get(key), str):
            p = Path(backend_cfg[key])
            backend_cfg[key] = str(p if p.is_absolute() else base / p)

    ci_cfg = data.get("ci")
    if not isinstance(ci_cfg, dict) or "command" not in ci_cfg:
        raise ConfigError(f"{path}: ci must be an object with a 'command' list")
    ci = CIAdapter(
        command=tuple(ci_cfg["command"]),
        timeout_seconds=float(ci_cfg.get("timeout_seconds", 300)),
        env=dict(ci_cfg.get("env", {})),
        workdir=ci_cfg.get("workdir", "."),
    )

    results = resolve("results") or base / "results.jsonl"
    return RunConfig(
        archive=archive,
        backend=backend_cfg,
        ci=ci,
        results=results,
        model=data.get("model", "codellama"),
        recipe=recipe,
        max_iterations=max_iterations,
        seed=int(data.get("seed", 0)),
        taxonomy=resolve("taxonomy"),
        template=resolve("template"),
        stack_patches=bool(data.get("stack_patches", False)),
        workspace_root=resolve("workspace_root"),
        error_cap=int(data.get("error_cap", 3)),
        context_lines=int(data.get("context_lines", 3)),
    )


def build_job(config: RunConfig) -> ShadowJob:
    """Instantiate the shadow job a configuration describes."""
    taxonomy: list[ErrorCategory] = (
        load_taxonomy(config.taxonomy) if config.taxonomy else default_taxonomy()
    )
    backend_cfg = dict(config.backend)
    kind = backend_cfg.pop("kind")
    try:
        backend: Backend = register_backend(kind, backend_cfg)
    except InvalidConfig as exc:
        raise ConfigError(str(exc)) from exc
    template = load_template(config.template) if config.template else None
    return ShadowJob(
        archive=BuildArchive(config.archive),
        taxonomy=taxonomy,
        backend=backend,
        ci=config.ci,
        template=template,
        seed=config.seed,
        error_cap=config.error_cap,
        context_lines=config.context_lines,
        stack_patches=config.stack_patches,
        workspace_root=config.workspace_root,
    )
