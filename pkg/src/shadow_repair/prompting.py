"""Prompt assembly: combine the four repair input kinds into one of the seven
fixed input combinations and render them as deterministic prompt text."""

from __future__ import annotations

import hashlib
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .diagnostics import CompileError
from .fixmine import FixExample
from .patching import Snippet

FULL_SOURCE = "full_source"
ERROR_LOG = "error_log"
ERRONEOUS_SNIPPET = "erroneous_snippet"
HUMAN_FIX_EXAMPLE = "human_fix_example"

# The seven recipes. An example-only combination is deliberately absent:
# a fix template alone carries no information about the failure at hand.
RECIPE_INPUTS: dict[int, frozenset[str]] = {
    0: frozenset({FULL_SOURCE}),
    1: frozenset({ERROR_LOG}),
    2: frozenset({ERRONEOUS_SNIPPET}),
    3: frozenset({ERROR_LOG, ERRONEOUS_SNIPPET}),
    4: frozenset({ERRONEOUS_SNIPPET, HUMAN_FIX_EXAMPLE}),
    5: frozenset({ERROR_LOG, HUMAN_FIX_EXAMPLE}),
    6: frozenset({ERROR_LOG, ERRONEOUS_SNIPPET, HUMAN_FIX_EXAMPLE}),
}

SECTION_PLACEHOLDERS = (FULL_SOURCE, ERROR_LOG, ERRONEOUS_SNIPPET, HUMAN_FIX_EXAMPLE, "target")

SECTION_LABELS = {
    FULL_SOURCE: "### FULL SOURCE FILE",
    ERROR_LOG: "### ERROR LOG",
    ERRONEOUS_SNIPPET: "### ERRONEOUS CODE",
    HUMAN_FIX_EXAMPLE: "### HUMAN FIX EXAMPLE",
}


class UnknownRecipe(ValueError):
    """Recipe number outside 0..6."""


class MissingInput(ValueError):
    """A section demanded by the recipe has no data."""


class BudgetImpossible(ValueError):
    """Token limit cannot hold even the untruncatable sections."""


def recipe_inputs(number: int) -> frozenset[str]:
    try:
        return RECIPE_INPUTS[number]
    except KeyError:
        raise UnknownRecipe(f"recipe number must be 0..6, got {number}") from None


@dataclass(frozen=True)
class PromptRecipe:
    number: int
    inputs: frozenset[str] = field(default=frozenset())

    def __post_init__(self):
        expected = recipe_inputs(self.number)
        if self.inputs and self.inputs != expected:
            raise UnknownRecipe(f"recipe {self.number} inputs must be {sorted(expected)}")
        if not self.inputs:
            object.__setattr__(self, "inputs", expected)


def load_template(path: str | Path) -> str:
    template = Path(path).read_text(encoding="utf-8")
    _validate_template(template, source=str(path))
    return template


def default_template() -> str:
    template = resources.files("shadow_repair").joinpath("data/prompt_template.txt").read_text("utf-8")
    _validate_template(template, source="<default>")
    return template


def _validate_template(template: str, source: str) -> None:
    names = {f[1] for f in string.Formatter().parse(template) if f[1]}
    missing = set(SECTION_PLACEHOLDERS) - names
    if missing:
        raise ValueError(f"{source}: template lacks placeholders {sorted(missing)}")


@dataclass(frozen=True)
class PromptInputs:
    """Everything assemble() was given; kept so the token-budget check can
    re-render with a shrunken source window."""

    source: str | None
    errors: tuple[CompileError, ...]
    snippets: tuple[Snippet, ...]
    example: FixExample | None
    log_text: str | None
    template: str


@dataclass(frozen=True)
class Prompt:
    recipe: PromptRecipe
    text: str
    file: str | None
    target_span: tuple[int, int] | None
    inputs: PromptInputs
    truncated: bool = False


def prompt_digest(prompt: Prompt | str) -> str:
    """Stable hex digest of the rendered prompt bytes."""
    text = prompt if isinstance(prompt, str) else prompt.text
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def assemble(
    recipe: PromptRecipe | int,
    *,
    source: str | None = None,
    errors: Sequence[CompileError] = (),
    snippets: Sequence[Snippet] = (),
    example: FixExample | None = None,
    template: str | None = None,
    log_text: str | None = None,
) -> Prompt:
    """Render the prompt for a recipe.

    Sections appear in fixed order (instruction, full source, error log,
    erroneous snippets, human fix example, replacement target), each under
    its labeled delimiter, and only for inputs the recipe demands. Output is
    byte-deterministic for fixed inputs. Raises MissingInput when a demanded
    section has no data.
    """
    if isinstance(recipe, int):
        recipe = PromptRecipe(recipe)
    inputs = PromptInputs(
        source=source,
        errors=tuple(errors),
        snippets=tuple(snippets),
        example=example,
        log_text=log_text,
        template=template if template is not None else default_template(),
    )
    return _render(recipe, inputs)


def _render(
    recipe: PromptRecipe,
    inputs: PromptInputs,
    source_body: str | None = None,
    log_body: str | None = None,
    truncated: bool = False,
) -> Prompt:
    wanted = recipe.inputs
    target = inputs.snippets[0] if inputs.snippets else None
    file = target.file if target else (inputs.errors[0].file if inputs.errors else None)

    bodies = {name: "" for name in SECTION_PLACEHOLDERS}

    if FULL_SOURCE in wanted:
        if not inputs.source:
            raise MissingInput("recipe demands the full source file but none was supplied")
        bodies[FULL_SOURCE] = source_body if source_body is not None else inputs.source

    if ERROR_LOG in wanted:
        if log_body is not None:
            bodies[ERROR_LOG] = log_body
        elif inputs.errors:
            bodies[ERROR_LOG] = "\n".join(e.raw for e in inputs.errors)
        elif inputs.log_text:
            bodies[ERROR_LOG] = inputs.log_text
        else:
            raise MissingInput("recipe demands the error log but none was supplied")

    if ERRONEOUS_SNIPPET in wanted:
        if not inputs.snippets:
            raise MissingInput("recipe demands erroneous code snippets but none were supplied")
        bodies[ERRONEOUS_SNIPPET] = "\n".join(_snippet_block(s) for s in inputs.snippets)

    if HUMAN_FIX_EXAMPLE in wanted:
        if inputs.example is None:
            raise MissingInput("recipe demands a human fix example but none was mined")
        bodies[HUMAN_FIX_EXAMPLE] = _example_block(inputs.example)

    sections = {
        name: f"{SECTION_LABELS[name]}\n{bodies[name]}\n\n" if bodies[name] else ""
        for name in SECTION_LABELS
    }
    if target is not None:
        a, b = target.core_lines
        lines = str(a) if a == b else f"{a}-{b}"
        sections["target"] = (
            "### REPLACEMENT TARGET\n"
            f"Replace lines {lines} of {target.file} with the corrected code.\n"
        )
    else:
        sections["target"] = ""

    text = inputs.template.format(file=file or "(unknown file)", **sections)
    return Prompt(
        recipe=recipe,
        text=text,
        file=file,
        target_span=target.core_lines if target else None,
        inputs=inputs,
        truncated=truncated,
    )


def _snippet_block(snippet: Snippet) -> str:
    a, b = snippet.span
    c1, c2 = snippet.core_lines
    core = str(c1) if c1 == c2 else f"{c1}-{c2}"
    return f"--- {snippet.file} lines {a}-{b} (erroneous: {core})\n{snippet.text}"


def _example_block(example: FixExample) -> str:
    return (
        f"A past fix for a {example.category.id} error in {example.file}:\n"
        f"--- before\n{example.faulty_segment}\n"
        f"--- after\n{example.fixed_segment}"
    )


def token_count(text: str) -> int:
    return len(text.split())


def token_budget_check(prompt: Prompt, limit: int) -> tuple[bool, Prompt]:
    """Fit the prompt into a whitespace-token budget.

    Within budget returns (True, prompt) unchanged. Otherwise the full-source
    section is shrunk first, to the widest window around the erroneous lines
    that fits; then the error-log section is trimmed to the bare diagnostic
    lines. Snippet and example sections are never touched. Raises
    BudgetImpossible when even that does not fit.
    """
    if limit <= 0:
        raise ValueError(f"limit must be positive, got {limit}")
    if token_count(prompt.text) <= limit:
        return True, prompt

    inputs = prompt.inputs
    recipe = prompt.recipe

    source_body: str | None = None
    if FULL_SOURCE in recipe.inputs and inputs.source:
        lines = inputs.source.split("\n")
        anchors = sorted(
            {e.line for e in inputs.errors if 1 <= e.line <= len(lines)}
        ) or [1]
        lo, hi = 0, len(lines)
        best = None
        while lo <= hi:
            mid = (lo + hi) // 2
            candidate = _render(
                recipe, inputs, source_body=_window(lines, anchors, mid), truncated=True
            )
            if token_count(candidate.text) <= limit:
                best = mid
                lo = mid + 1
            else:
                hi = mid - 1
        if best is not None:
            return False, _render(
                recipe, inputs, source_body=_window(lines, anchors, best), truncated=True
            )
        source_body = _window(lines, anchors, 0)

    if ERROR_LOG in recipe.inputs and inputs.errors:
        log_body = "\n".join(e.raw.split("\n")[0] for e in inputs.errors)
        candidate = _render(
            recipe, inputs, source_body=source_body, log_body=log_body, truncated=True
        )
        if token_count(candidate.text) <= limit:
            return False, candidate

    raise BudgetImpossible(
        f"limit of {limit} tokens cannot hold the prompt's untruncatable sections"
    )


def _window(lines: list[str], anchors: list[int], radius: int) -> str:
    """Union of +-radius line windows around the anchors, gaps elided."""
    keep = set()
    for anchor in anchors:
        for i in range(max(1, anchor - radius), min(len(lines), anchor + radius) + 1):
            keep.add(i)
    out: list[str] = []
    previous = 0
    for i in sorted(keep):
        if previous and i > previous + 1:
            out.append("...")
        out.append(lines[i - 1])
        previous = i
    if not out:
        return "..."
    if min(keep) > 1:
        out.insert(0, "...")
    if max(keep) < len(lines):
        out.append("...")
    return "\n".join(out)
