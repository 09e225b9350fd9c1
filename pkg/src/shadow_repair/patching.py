"""Snippet extraction, single-file patch application, and fix comparison."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

from .diagnostics import CompileError

LABEL_EXACT = "exact"
LABEL_PLAUSIBLE = "plausible"
LABEL_IMPLAUSIBLE = "implausible"
LABEL_UNLABELED = "unlabeled"

MANUAL_LABELS = (LABEL_EXACT, LABEL_PLAUSIBLE, LABEL_IMPLAUSIBLE)

_OPENERS = "([{"
_CLOSERS = ")]}"


class LineOutOfRange(ValueError):
    """Diagnostic line does not exist in the file (stale snapshot)."""


class SpanOutOfRange(ValueError):
    """Patch span does not fit the file it is applied to."""


@dataclass(frozen=True)
class Snippet:
    """Erroneous code plus surrounding context.

    ``span`` and ``core_lines`` are inclusive 1-based line ranges;
    ``core_lines`` covers the erroneous lines proper and is what a patch
    replaces, while the rest of ``span`` is prompt-only context.
    """

    file: str
    span: tuple[int, int]
    core_lines: tuple[int, int]
    text: str


class PatchOrigin(NamedTuple):
    model: str
    iteration: int


@dataclass(frozen=True)
class Patch:
    file: str
    span: tuple[int, int]
    replacement: str
    origin: PatchOrigin


@dataclass(frozen=True)
class FixClassification:
    label: str
    source: str  # "automatic" | "manual" | "none"


@dataclass(frozen=True)
class ManualLabel:
    session_id: str
    attempt: int
    label: str
    reviewer: str


def extract_snippet(source: str, error: CompileError, context: int = 3) -> Snippet:
    """Cut the erroneous lines plus up to ``context`` adjacent lines on each
    side, clipped to the file bounds.

    The core is the diagnostic line, extended downward while it looks
    syntactically continued (trailing backslash or unbalanced brackets) up to
    the span edge. Bracket counting is naive: string literals are not parsed.
    """
    if context < 0:
        raise ValueError(f"context must be >= 0, got {context}")
    lines = source.split("\n")
    if not 1 <= error.line <= len(lines):
        raise LineOutOfRange(
            f"{error.file}: diagnostic line {error.line} outside file of {len(lines)} lines"
        )
    start = max(1, error.line - context)
    end = min(len(lines), error.line + context)
    core_end = error.line
    while core_end < end and _continues(lines[error.line - 1 : core_end]):
        core_end += 1
    return Snippet(
        file=error.file,
        span=(start, end),
        core_lines=(error.line, core_end),
        text="\n".join(lines[start - 1 : end]),
    )


def _continues(core: list[str]) -> bool:
    if core and core[-1].rstrip().endswith("\\"):
        return True
    text = "\n".join(core)
    depth = sum(text.count(c) for c in _OPENERS) - sum(text.count(c) for c in _CLOSERS)
    return depth > 0


def apply_patch(source: str, patch: Patch) -> str:
    """Replace the patch span's lines with the replacement; everything outside
    the span stays byte-identical. Returns new text, never mutates in place."""
    lines = source.split("\n")
    start, end = patch.span
    if not (1 <= start <= end <= len(lines)):
        raise SpanOutOfRange(f"span {patch.span} invalid for file of {len(lines)} lines")
    return "\n".join(lines[: start - 1] + patch.replacement.split("\n") + lines[end:])


def normalize_newlines(text: str) -> tuple[str, str]:
    """Normalize to ``\\n`` for internal work; returns (text, original style)."""
    if "\r\n" in text:
        return text.replace("\r\n", "\n"), "\r\n"
    return text, "\n"


def restore_newlines(text: str, style: str) -> str:
    return text.replace("\n", style) if style != "\n" else text


def exact_match(candidate: str, reference: str) -> bool:
    """Case-sensitive token equality, ignoring all whitespace differences."""
    return candidate.split() == reference.split()


def classify_fix(
    candidate: str,
    historical: str | None = None,
    manual_label: str | None = None,
) -> FixClassification:
    """Exact when the candidate token-matches the historical fix; otherwise
    the reviewer's label when present; otherwise unlabeled (pending review)."""
    if manual_label is not None and manual_label not in (LABEL_PLAUSIBLE, LABEL_IMPLAUSIBLE):
        raise ValueError(f"manual label must be plausible/implausible, got {manual_label!r}")
    if historical is not None and exact_match(candidate, historical):
        return FixClassification(LABEL_EXACT, "automatic")
    if manual_label is not None:
        return FixClassification(manual_label, "manual")
    return FixClassification(LABEL_UNLABELED, "none")


def load_manual_labels(path: str | Path) -> list[ManualLabel]:
    """Read the reviewer label file: one JSON record per line with
    session_id, attempt, label, reviewer."""
    labels = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            label = ManualLabel(
                session_id=rec["session_id"],
                attempt=int(rec["attempt"]),
                label=rec["label"],
                reviewer=rec["reviewer"],
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"label file line {lineno}: {exc}") from exc
        if label.label not in MANUAL_LABELS:
            raise ValueError(f"label file line {lineno}: unknown label {label.label!r}")
        labels.append(label)
    return labels
