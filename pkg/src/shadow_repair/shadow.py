"""The shadow repair loop.

On a failing build, iterate generate -> patch -> run CI inside an isolated
workspace copy until the build passes or the iteration cap is reached. The
main pipeline and the original snapshot are never touched.
"""

from __future__ import annotations

import json
import os
import shutil
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .backend import Backend, BackendError, ModelConfig, PatchCandidate, get_model
from .diagnostics import CompileError, ErrorCategory, parse_log, select_primary_errors
from .fixmine import BuildArchive, BuildRecord, FixExample, build_example_catalog
from .patching import (
    LineOutOfRange,
    Patch,
    PatchOrigin,
    Snippet,
    SpanOutOfRange,
    apply_patch,
    extract_snippet,
    normalize_newlines,
    restore_newlines,
)
from .prompting import (
    ERRONEOUS_SNIPPET,
    BudgetImpossible,
    MissingInput,
    Prompt,
    PromptRecipe,
    assemble,
    prompt_digest,
    token_budget_check,
)


class WorkspaceError(OSError):
    """Could not materialize the snapshot into a private workspace."""


class ConfigError(ValueError):
    """Session or CI adapter configuration rejected."""


class MalformedResults(ValueError):
    """Results file contains an unreadable session record."""

    def __init__(self, line: int, message: str):
        super().__init__(f"results line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class CIAdapter:
    """How to run the shadow CI check inside a workspace."""

    command: tuple[str, ...]
    timeout_seconds: float = 300.0
    env: dict[str, str] = field(default_factory=dict)
    workdir: str = "."

    def __post_init__(self):
        if not self.command:
            raise ConfigError("CI adapter needs a non-empty command")
        if self.timeout_seconds <= 0:
            raise ConfigError("CI timeout must be positive")


@dataclass(frozen=True)
class CIVerdict:
    outcome: str  # "pass" | "fail"
    stage_reached: str
    log: str
    duration: float


@dataclass(frozen=True)
class RepairAttempt:
    iteration: int
    prompt_digest: str
    candidate: PatchCandidate | None
    verdict: CIVerdict
    started: datetime
    ended: datetime


@dataclass(frozen=True)
class RepairSession:
    session_id: str
    failing_build: str
    model: str
    recipe: int
    attempts: tuple[RepairAttempt, ...]
    final: str  # "pass" | "fail"
    total_duration: float
    started: datetime
    ended: datetime
    note: str | None = None


def run_ci(workspace: Path, ci: CIAdapter) -> CIVerdict:
    """Run the CI command in the workspace; pass means exit code 0 before the
    timeout. Combined stdout/stderr is captured as the verdict log."""
    workdir = Path(workspace) / ci.workdir
    env = {**os.environ, **ci.env}
    started = time.perf_counter()
    try:
        proc = subprocess.run(
            list(ci.command),
            cwd=workdir,
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            timeout=ci.timeout_seconds,
            text=True,
        )
    except subprocess.TimeoutExpired as exc:
        output = exc.output
        if isinstance(output, bytes):
            output = output.decode("utf-8", "replace")
        return CIVerdict(
            outcome="fail",
            stage_reached="timeout",
            log=output or "",
            duration=time.perf_counter() - started,
        )
    except OSError as exc:
        raise ConfigError(f"cannot run CI command {ci.command}: {exc}") from exc
    duration = time.perf_counter() - started
    if proc.returncode == 0:
        return CIVerdict("pass", "completed", proc.stdout or "", duration)
    return CIVerdict("fail", "command-failed", proc.stdout or "", duration)


# Fix-time buckets: 2-minute bins below 10 minutes, 5-minute bins beyond,
# capped by a single overflow bucket.
FINE_LIMIT_MIN = 10
FINE_WIDTH_MIN = 2
COARSE_WIDTH_MIN = 5
DEFAULT_OVERFLOW_MIN = 30


def bucket_of(duration_seconds: float, overflow_minutes: int = DEFAULT_OVERFLOW_MIN) -> str:
    if duration_seconds < 0:
        raise ValueError("duration must be non-negative")
    minutes = duration_seconds / 60.0
    if minutes < FINE_LIMIT_MIN:
        lo = int(minutes // FINE_WIDTH_MIN) * FINE_WIDTH_MIN
        return f"[{lo},{lo + FINE_WIDTH_MIN})"
    if minutes < overflow_minutes:
        lo = int(minutes // COARSE_WIDTH_MIN) * COARSE_WIDTH_MIN
        return f"[{lo},{lo + COARSE_WIDTH_MIN})"
    return f"{overflow_minutes}+"


def bucket_labels(overflow_minutes: int = DEFAULT_OVERFLOW_MIN) -> list[str]:
    labels = [
        f"[{lo},{lo + FINE_WIDTH_MIN})" for lo in range(0, FINE_LIMIT_MIN, FINE_WIDTH_MIN)
    ]
    labels += [
        f"[{lo},{lo + COARSE_WIDTH_MIN})"
        for lo in range(FINE_LIMIT_MIN, overflow_minutes, COARSE_WIDTH_MIN)
    ]
    labels.append(f"{overflow_minutes}+")
    return labels


class ShadowJob:
    """Runs repair sessions against a build archive.

    Sessions are independent and may run concurrently; each owns a private
    workspace directory and attempts within it are strictly sequential.
    Shared state (archive, backend, mined example cache) is read-only or
    lock-protected.
    """

    ITERATION_CEILING = 10

    def __init__(
        self,
        archive: BuildArchive,
        taxonomy: list[ErrorCategory],
        backend: Backend,
        ci: CIAdapter,
        *,
        template: str | None = None,
        seed: int = 0,
        error_cap: int = 3,
        context_lines: int = 3,
        stack_patches: bool = False,
        workspace_root: str | Path | None = None,
        keep_workspaces: bool = False,
    ):
        self.archive = archive
        self.taxonomy = taxonomy
        self.backend = backend
        self.ci = ci
        self.template = template
        self.seed = seed
        self.error_cap = error_cap
        self.context_lines = context_lines
        self.stack_patches = stack_patches
        self.workspace_root = Path(workspace_root) if workspace_root else None
        self.keep_workspaces = keep_workspaces
        self._catalogs: dict[int, dict[str, FixExample]] = {}
        self._catalog_lock = threading.Lock()

    def catalog_before(self, build_id: str) -> dict[str, FixExample]:
        """Fix examples mined from history strictly before the given build,
        one per category, chosen under this job's seed."""
        index = self.archive.index_of(build_id)
        with self._catalog_lock:
            if index not in self._catalogs:
                self._catalogs[index] = build_example_catalog(
                    self.archive, self.taxonomy, self.seed, before_index=index
                )
            return self._catalogs[index]

    def build_prompt(self, failing: BuildRecord, recipe: int) -> Prompt:
        """Assemble the repair prompt for a failing build.

        Diagnostics are parsed from the stored failing-build log; snippets
        come from the snapshot; the fix example (when the recipe wants one)
        is looked up by the primary error's category. Raises MissingInput
        when the recipe demands data this failure cannot provide.
        """
        log_text = self.archive.log_text(failing.build_id)
        errors = parse_log(log_text, self.taxonomy)
        primary = select_primary_errors(errors, self.error_cap) if errors else []

        usable: list[CompileError] = []
        snippets: list[Snippet] = []
        for error in primary:
            text = self.archive.file_text(failing.build_id, error.file)
            if text is None:
                continue
            try:
                snippets.append(extract_snippet(text, error, self.context_lines))
            except LineOutOfRange:
                continue
            usable.append(error)

        source = None
        if usable:
            source = self.archive.file_text(failing.build_id, usable[0].file)
        example = None
        if usable:
            example = self.catalog_before(failing.build_id).get(usable[0].category.id)

        return assemble(
            recipe,
            source=source,
            errors=usable or errors,
            snippets=snippets,
            example=example,
            template=self.template,
            log_text=log_text,
        )

    def run_session(
        self,
        failing: str | BuildRecord,
        recipe: int,
        model: str | ModelConfig,
        max_iterations: int = 5,
        session_id: str | None = None,
    ) -> RepairSession:
        if isinstance(failing, str):
            failing = self.archive.record(failing)
        if isinstance(model, str):
            model = get_model(model)
        if failing.outcome != "fail":
            raise ConfigError(f"build {failing.build_id!r} did not fail; nothing to repair")
        if not 1 <= max_iterations <= self.ITERATION_CEILING:
            raise ConfigError(
                f"max_iterations must be in 1..{self.ITERATION_CEILING}, got {max_iterations}"
            )
        recipe_obj = PromptRecipe(recipe)
        if session_id is None:
            session_id = f"{failing.build_id}:{model.name}:r{recipe}:s{self.seed}"

        started = datetime.now(timezone.utc)
        clock_start = time.perf_counter()

        def finish(attempts: list[RepairAttempt], note: str | None) -> RepairSession:
            final = "pass" if attempts and attempts[-1].verdict.outcome == "pass" else "fail"
            return RepairSession(
                session_id=session_id,
                failing_build=failing.build_id,
                model=model.name,
                recipe=recipe,
                attempts=tuple(attempts),
                final=final,
                total_duration=time.perf_counter() - clock_start,
                started=started,
                ended=datetime.now(timezone.utc),
                note=note,
            )

        try:
            prompt = self.build_prompt(failing, recipe_obj.number)
            _, prompt = token_budget_check(prompt, model.max_tokens)
        except (MissingInput, BudgetImpossible) as exc:
            return finish([], f"no attempt possible: {exc}")

        attempts: list[RepairAttempt] = []
        workspace: Path | None = None
        note = None
        try:
            for iteration in range(1, max_iterations + 1):
                if workspace is None or not self.stack_patches:
                    if workspace is not None:
                        self._discard(workspace)
                    workspace = self._materialize(failing)
                attempt = self._attempt(workspace, prompt, model, iteration, session_id)
                attempts.append(attempt)
                if attempt.verdict.outcome == "pass":
                    break
                if not (prompt.file and prompt.target_span):
                    # no patch target: retrying would re-run an identical check
                    note = "no patch target derivable from the diagnostics; single attempt"
                    break
                if self.stack_patches:
                    rebuilt = self._rebuild_from_verdict(attempt.verdict, prompt, recipe_obj)
                    if rebuilt is not None:
                        prompt = rebuilt
        finally:
            if workspace is not None:
                self._discard(workspace)
        return finish(attempts, note)

    def _attempt(
        self,
        workspace: Path,
        prompt: Prompt,
        model: ModelConfig,
        iteration: int,
        session_id: str,
    ) -> RepairAttempt:
        attempt_started = datetime.now(timezone.utc)
        digest = prompt_digest(prompt)
        try:
            candidate = self.backend.generate(prompt, model, iteration, session_id)
        except BackendError:
            # recorded as a failed attempt, never a crash
            return RepairAttempt(
                iteration=iteration,
                prompt_digest=digest,
                candidate=None,
                verdict=CIVerdict("fail", "backend-error", "", 0.0),
                started=attempt_started,
                ended=datetime.now(timezone.utc),
            )
        verdict = self._apply_and_check(workspace, prompt, candidate, model, iteration)
        return RepairAttempt(
            iteration=iteration,
            prompt_digest=digest,
            candidate=candidate,
            verdict=verdict,
            started=attempt_started,
            ended=datetime.now(timezone.utc),
        )

    def _apply_and_check(
        self,
        workspace: Path,
        prompt: Prompt,
        candidate: PatchCandidate,
        model: ModelConfig,
        iteration: int,
    ) -> CIVerdict:
        if prompt.file and prompt.target_span:
            target = workspace / prompt.file
            try:
                original, style = normalize_newlines(target.read_text("utf-8"))
                patch = Patch(
                    file=prompt.file,
                    span=prompt.target_span,
                    replacement=candidate.text,
                    origin=PatchOrigin(model.name, iteration),
                )
                target.write_text(restore_newlines(apply_patch(original, patch), style), "utf-8")
            except (OSError, SpanOutOfRange) as exc:
                return CIVerdict("fail", "patch-error", str(exc), 0.0)
        return run_ci(workspace, self.ci)

    def _rebuild_from_verdict(
        self, verdict: CIVerdict, previous: Prompt, recipe: PromptRecipe
    ) -> Prompt | None:
        """In patch-stacking mode, re-derive the prompt from the fresh failure
        log so the next attempt sees the build's current state."""
        errors = parse_log(verdict.log, self.taxonomy)
        if not errors:
            return None
        primary = select_primary_errors(errors, self.error_cap)
        needs_snippets = ERRONEOUS_SNIPPET in recipe.inputs
        if needs_snippets and not previous.inputs.snippets:
            return None
        try:
            prompt = assemble(
                recipe.number,
                source=previous.inputs.source,
                errors=primary,
                snippets=previous.inputs.snippets,
                example=previous.inputs.example,
                template=previous.inputs.template,
                log_text=verdict.log,
            )
        except MissingInput:
            return None
        return prompt

    def _materialize(self, failing: BuildRecord) -> Path:
        if not failing.snapshot_path.is_dir():
            raise WorkspaceError(f"{failing.build_id}: snapshot missing at {failing.snapshot_path}")
        if self.workspace_root is not None:
            self.workspace_root.mkdir(parents=True, exist_ok=True)
        base = tempfile.mkdtemp(prefix="shadow-", dir=self.workspace_root)
        workspace = Path(base) / "tree"
        try:
            shutil.copytree(failing.snapshot_path, workspace, symlinks=True)
        except OSError as exc:
            shutil.rmtree(base, ignore_errors=True)
            raise WorkspaceError(f"cannot copy snapshot of {failing.build_id}: {exc}") from exc
        return workspace

    def _discard(self, workspace: Path) -> None:
        if not self.keep_workspaces:
            shutil.rmtree(workspace.parent, ignore_errors=True)


# -- session record (de)serialization ---------------------------------------


def session_to_dict(session: RepairSession) -> dict:
    return {
        "session_id": session.session_id,
        "failing_build": session.failing_build,
        "model": session.model,
        "recipe": session.recipe,
        "final": session.final,
        "total_duration": session.total_duration,
        "started": session.started.isoformat(),
        "ended": session.ended.isoformat(),
        "note": session.note,
        "attempts": [
            {
                "iteration": a.iteration,
                "prompt_digest": a.prompt_digest,
                "started": a.started.isoformat(),
                "ended": a.ended.isoformat(),
                "candidate": None
                if a.candidate is None
                else {
                    "text": a.candidate.text,
                    "model": a.candidate.model,
                    "latency": a.candidate.latency,
                    "iteration": a.candidate.iteration,
                },
                "verdict": {
                    "outcome": a.verdict.outcome,
                    "stage_reached": a.verdict.stage_reached,
                    "log": a.verdict.log,
                    "duration": a.verdict.duration,
                },
            }
            for a in session.attempts
        ],
    }


def session_from_dict(data: dict) -> RepairSession:
    attempts = tuple(
        RepairAttempt(
            iteration=a["iteration"],
            prompt_digest=a["prompt_digest"],
            candidate=None
            if a["candidate"] is None
            else PatchCandidate(
                text=a["candidate"]["text"],
                model=a["candidate"]["model"],
                latency=a["candidate"]["latency"],
                iteration=a["candidate"]["iteration"],
            ),
            verdict=CIVerdict(
                outcome=a["verdict"]["outcome"],
                stage_reached=a["verdict"]["stage_reached"],
                log=a["verdict"]["log"],
                duration=a["verdict"]["duration"],
            ),
            started=datetime.fromisoformat(a["started"]),
            ended=datetime.fromisoformat(a["ended"]),
        )
        for a in data["attempts"]
    )
    return RepairSession(
        session_id=data["session_id"],
        failing_build=data["failing_build"],
        model=data["model"],
        recipe=data["recipe"],
        attempts=attempts,
        final=data["final"],
        total_duration=data["total_duration"],
        started=datetime.fromisoformat(data["started"]),
        ended=datetime.fromisoformat(data["ended"]),
        note=data.get("note"),
    )


def append_session(path: str | Path, session: RepairSession) -> None:
    """Append one JSON session record per line to the results file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as handle:
        handle.write(json.dumps(session_to_dict(session), sort_keys=True) + "\n")


def load_sessions(path: str | Path) -> list[RepairSession]:
    sessions = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            sessions.append(session_from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedResults(lineno, str(exc)) from exc
    return sessions
