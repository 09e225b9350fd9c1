"""Build-log parsing: turn raw compiler/CI output into structured,
categorized compilation errors and pick the ones worth repairing."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

SEVERITY_ERROR = "error"
SEVERITY_STATIC_CHECK = "static-check-violation"

# file:line[:col]: kind: message  (gcc, clang, and most C/C++ front ends)
_DIAG_RE = re.compile(
    r"^(?P<file>[^:\s][^:]*?):(?P<line>\d+):(?:(?P<col>\d+):)?\s*"
    r"(?P<kind>fatal error|error|warning|note):\s?(?P<msg>.*)$"
)

# Report lines emitted by static-check tools. Deployments extend this list;
# each pattern must bind file/line/msg groups (col optional).
DEFAULT_STATIC_CHECK_PATTERNS = (
    r"^(?P<file>[^:\s][^:]*?):(?P<line>\d+):(?:(?P<col>\d+):)?\s*static-check:\s?(?P<msg>.*)$",
)

# Diagnostic context emitted alongside the error proper: gcc's numbered
# source excerpt and gutter rows, caret rows from gcc and clang.
_CONTEXT_RES = (
    re.compile(r"^\s*\d+\s*\|"),
    re.compile(r"^\s*\|"),
    re.compile(r"^\s*[\^~][\^~\s|()'\",;:.a-zA-Z0-9_*&<>\[\]+-]*$"),
)


@dataclass(frozen=True)
class ErrorCategory:
    """One entry of the error taxonomy.

    ``patterns`` are regexes matched (case-insensitively) against diagnostic
    messages; an empty list marks the catch-all entry.
    """

    id: str
    description: str
    dependency_related: bool
    patterns: tuple[str, ...] = ()

    def matches(self, message: str) -> bool:
        return any(re.search(p, message, re.IGNORECASE) for p in self.patterns)


@dataclass(frozen=True)
class CompileError:
    """A single structured diagnostic extracted from a build log."""

    file: str
    line: int
    message: str
    severity: str
    raw: str
    column: int | None = None
    category: ErrorCategory | None = None


class TaxonomyError(ValueError):
    """Raised for malformed taxonomy files."""


def load_taxonomy(path: str | Path) -> list[ErrorCategory]:
    """Load an error taxonomy from a JSON file and validate its invariants."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return _taxonomy_from_dict(data, source=str(path))


def default_taxonomy() -> list[ErrorCategory]:
    """The 14-entry taxonomy shipped with the package."""
    text = resources.files("shadow_repair").joinpath("data/taxonomy.json").read_text("utf-8")
    return _taxonomy_from_dict(json.loads(text), source="<default>")


def _taxonomy_from_dict(data: dict, source: str) -> list[ErrorCategory]:
    entries = data.get("categories")
    if not entries:
        raise TaxonomyError(f"{source}: taxonomy has no categories")
    categories = []
    seen: set[str] = set()
    for entry in entries:
        cat = ErrorCategory(
            id=entry["id"],
            description=entry.get("description", ""),
            dependency_related=bool(entry.get("dependency_related", False)),
            patterns=tuple(entry.get("patterns", ())),
        )
        if cat.id in seen:
            raise TaxonomyError(f"{source}: duplicate category id {cat.id!r}")
        seen.add(cat.id)
        categories.append(cat)
    if not any(not c.patterns for c in categories):
        raise TaxonomyError(f"{source}: taxonomy needs a catch-all entry (empty patterns)")
    return categories


def catch_all(taxonomy: list[ErrorCategory]) -> ErrorCategory:
    for cat in taxonomy:
        if not cat.patterns:
            return cat
    raise TaxonomyError("taxonomy has no catch-all entry")


def categorize(error: CompileError, taxonomy: list[ErrorCategory]) -> ErrorCategory:
    """First taxonomy entry whose patterns match the message, else the catch-all."""
    for cat in taxonomy:
        if cat.patterns and cat.matches(error.message):
            return cat
    return catch_all(taxonomy)


def parse_log(
    log: str,
    taxonomy: list[ErrorCategory] | None = None,
    static_check_patterns: tuple[str, ...] = DEFAULT_STATIC_CHECK_PATTERNS,
) -> list[CompileError]:
    """Extract structured errors from a raw build log.

    Recognizes the standard ``file:line[:col]: error: message`` shape plus
    static-check report lines. Context rows (source excerpts, carets) and
    trailing ``note:`` diagnostics are folded into the preceding error's
    ``raw`` text. Warnings and unrecognized lines are dropped. An
    unparseable log yields an empty list.
    """
    static_res = [re.compile(p) for p in static_check_patterns]
    lines = log.split("\n")
    errors: list[CompileError] = []
    group: list[str] = []  # raw lines of the error currently being folded
    current: CompileError | None = None
    in_dropped_diag = False  # consuming context of a warning/orphan note

    def flush() -> None:
        nonlocal current
        if current is not None:
            errors.append(replace(current, raw="\n".join(group)))
            current = None

    for i, line in enumerate(lines):
        m = _DIAG_RE.match(line)
        if m:
            kind = m.group("kind")
            if kind == "note":
                if current is not None:
                    group.append(line)
                else:
                    in_dropped_diag = True
                continue
            flush()
            in_dropped_diag = kind == "warning"
            if in_dropped_diag:
                continue
            current = _make_error(m, SEVERITY_ERROR, taxonomy)
            if current is None:
                in_dropped_diag = True
                continue
            group = [line]
            continue

        sm = _match_static(line, static_res)
        if sm:
            flush()
            current = _make_error(sm, SEVERITY_STATIC_CHECK, taxonomy)
            in_dropped_diag = current is None
            group = [line] if current is not None else group
            continue

        if _is_context(line, lines[i + 1] if i + 1 < len(lines) else ""):
            if current is not None:
                group.append(line)
            # context of a dropped warning is dropped with it
            continue

        # plain noise ends any open group
        flush()
        in_dropped_diag = False

    flush()
    return errors


def _match_static(line: str, patterns: list[re.Pattern[str]]) -> re.Match[str] | None:
    for pat in patterns:
        m = pat.match(line)
        if m:
            return m
    return None


def _make_error(
    m: re.Match[str], severity: str, taxonomy: list[ErrorCategory] | None
) -> CompileError | None:
    line = int(m.group("line"))
    if line < 1:
        # gcc reports file-scope problems at line 0; no position to repair
        return None
    column = m.groupdict().get("col")
    err = CompileError(
        file=m.group("file"),
        line=line,
        column=int(column) if column and int(column) >= 1 else None,
        message=m.group("msg"),
        severity=severity,
        raw=m.group(0),
    )
    if taxonomy is not None:
        err = replace(err, category=categorize(err, taxonomy))
    return err


def _is_context(line: str, next_line: str) -> bool:
    if not line.strip():
        return False
    if any(p.match(line) for p in _CONTEXT_RES):
        return True
    # clang echoes the offending source line right before its caret row
    return bool(_CONTEXT_RES[2].match(next_line))


def select_primary_errors(errors: list[CompileError], cap: int = 3) -> list[CompileError]:
    """At most ``cap`` errors to repair: earliest in the log, with identical
    (file, line, message) triples deduplicated."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    seen: set[tuple[str, int, str]] = set()
    picked: list[CompileError] = []
    for err in errors:
        key = (err.file, err.line, err.message)
        if key in seen:
            continue
        seen.add(key)
        picked.append(err)
        if len(picked) == cap:
            break
    return picked
