"""Mine human fix examples from a build-history archive.

A failed build is paired with the first subsequent successful build; diffing
the faulty file between the two snapshots yields the segment a human changed
to make the build pass.
"""

from __future__ import annotations

import difflib
import json
import random
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .diagnostics import CompileError, ErrorCategory, parse_log, select_primary_errors

OUTCOME_PASS = "pass"
OUTCOME_FAIL = "fail"


class MalformedArchive(ValueError):
    """Archive directory violates the expected layout or ordering."""


class NoSubsequentSuccess(LookupError):
    """No passing build follows the failure; it was never resolved."""


class FilesIdentical(ValueError):
    """The fix did not touch the diagnostic's file (cross-file fix)."""


class FileMissing(FileNotFoundError):
    """Snapshot lacks the diagnostic's file."""


@dataclass(frozen=True)
class BuildRecord:
    build_id: str
    commit_id: str
    timestamp: datetime
    outcome: str
    log_path: Path
    snapshot_path: Path


@dataclass(frozen=True)
class FixExample:
    """A historical human fix: the faulty segment and its replacement."""

    category: ErrorCategory
    faulty_segment: str
    fixed_segment: str
    file: str
    failing_build: str
    fixing_build: str


class BuildArchive:
    """Read-only view of an on-disk build history.

    Layout: ``builds/<build_id>/`` holding ``meta.json``, ``log.txt`` and a
    full source snapshot under ``src/``; ``order.txt`` at the root lists
    build ids chronologically.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        order_file = self.root / "order.txt"
        if not order_file.is_file():
            raise MalformedArchive(f"{self.root}: missing order.txt index")
        ids = [line.strip() for line in order_file.read_text("utf-8").splitlines() if line.strip()]
        if len(ids) != len(set(ids)):
            raise MalformedArchive(f"{self.root}: duplicate build ids in order.txt")
        self.records: list[BuildRecord] = [self._load_record(bid) for bid in ids]
        keys = [(r.timestamp, r.build_id) for r in self.records]
        if keys != sorted(keys):
            raise MalformedArchive(f"{self.root}: order.txt is not chronological")
        self._index = {r.build_id: i for i, r in enumerate(self.records)}

    def _load_record(self, build_id: str) -> BuildRecord:
        build_dir = self.root / "builds" / build_id
        meta_path = build_dir / "meta.json"
        try:
            meta = json.loads(meta_path.read_text("utf-8"))
        except FileNotFoundError:
            raise MalformedArchive(f"{self.root}: build {build_id!r} has no meta.json") from None
        except json.JSONDecodeError as exc:
            raise MalformedArchive(f"{meta_path}: {exc}") from exc
        if meta.get("build_id") != build_id:
            raise MalformedArchive(f"{meta_path}: build_id does not match directory name")
        outcome = meta.get("outcome")
        if outcome not in (OUTCOME_PASS, OUTCOME_FAIL):
            raise MalformedArchive(f"{meta_path}: outcome must be pass or fail, got {outcome!r}")
        return BuildRecord(
            build_id=build_id,
            commit_id=meta.get("commit_id", ""),
            timestamp=datetime.fromisoformat(meta["timestamp"]),
            outcome=outcome,
            log_path=build_dir / "log.txt",
            snapshot_path=build_dir / "src",
        )

    def __len__(self) -> int:
        return len(self.records)

    def index_of(self, build_id: str) -> int:
        try:
            return self._index[build_id]
        except KeyError:
            raise MalformedArchive(f"unknown build id {build_id!r}") from None

    def record(self, build_id: str) -> BuildRecord:
        return self.records[self.index_of(build_id)]

    def log_text(self, build_id: str) -> str:
        return self.record(build_id).log_path.read_text("utf-8")

    def file_text(self, build_id: str, relpath: str) -> str | None:
        path = self.record(build_id).snapshot_path / relpath
        if not path.is_file():
            return None
        return path.read_text("utf-8")


def find_first_success(archive: BuildArchive, failing: str) -> BuildRecord:
    """Earliest record strictly after the failing build with a pass outcome."""
    idx = archive.index_of(failing)
    rec = archive.records[idx]
    if rec.outcome != OUTCOME_FAIL:
        raise ValueError(f"build {failing!r} did not fail (outcome={rec.outcome})")
    for candidate in archive.records[idx + 1 :]:
        if candidate.outcome == OUTCOME_PASS:
            return candidate
    raise NoSubsequentSuccess(failing)


def derive_fix_example(
    failing: BuildRecord, fixing: BuildRecord, error: CompileError
) -> FixExample:
    """Diff the diagnostic's file between the failing and fixing snapshots
    and return the changed segment nearest the diagnostic line.

    Hunks separated by at most one unchanged line are merged; ties between
    equally near hunks go to the earlier one. When the human fix touched
    several segments, only the nearest one is returned; catalog mining
    additionally requires that splicing the segment back reconstructs the
    fixed file, which single-segment fixes always satisfy.
    """
    example, _ = _derive_checked(failing, fixing, error)
    return example


def _derive_checked(
    failing: BuildRecord, fixing: BuildRecord, error: CompileError
) -> tuple[FixExample, bool]:
    if error.category is None:
        raise ValueError("error must be categorized before deriving an example")
    faulty_text = _read_snapshot_file(failing, error.file)
    fixed_text = _read_snapshot_file(fixing, error.file)
    if faulty_text == fixed_text:
        raise FilesIdentical(f"{error.file}: identical in {failing.build_id} and {fixing.build_id}")

    a = faulty_text.split("\n")
    b = fixed_text.split("\n")
    hunks = _diff_hunks(a, b, merge_gap=1)
    hunks = [h for h in hunks if "\n".join(a[h[0] : h[1]]).split() != "\n".join(b[h[2] : h[3]]).split()]
    if not hunks:
        # only whitespace moved; nothing worth templating
        raise FilesIdentical(f"{error.file}: differs only in whitespace")

    a1, a2, b1, b2 = min(hunks, key=lambda h: (_line_distance(error.line, h[0], h[1]), h[0]))
    example = FixExample(
        category=error.category,
        faulty_segment="\n".join(a[a1:a2]),
        fixed_segment="\n".join(b[b1:b2]),
        file=error.file,
        failing_build=failing.build_id,
        fixing_build=fixing.build_id,
    )
    reconstructs = "\n".join(a[:a1] + b[b1:b2] + a[a2:]) == fixed_text
    return example, reconstructs


def _read_snapshot_file(record: BuildRecord, relpath: str) -> str:
    path = record.snapshot_path / relpath
    if not path.is_file():
        raise FileMissing(f"{record.build_id}: snapshot has no {relpath}")
    return path.read_text("utf-8")


def _diff_hunks(
    a: list[str], b: list[str], merge_gap: int
) -> list[tuple[int, int, int, int]]:
    """Changed runs as (a_start, a_end, b_start, b_end) half-open 0-based
    ranges, with runs separated by <= merge_gap equal lines coalesced."""
    matcher = difflib.SequenceMatcher(a=a, b=b, autojunk=False)
    raw = [
        (i1, i2, j1, j2)
        for tag, i1, i2, j1, j2 in matcher.get_opcodes()
        if tag != "equal"
    ]
    merged: list[tuple[int, int, int, int]] = []
    for hunk in raw:
        if merged and hunk[0] - merged[-1][1] <= merge_gap:
            p = merged[-1]
            merged[-1] = (p[0], hunk[1], p[2], hunk[3])
        else:
            merged.append(hunk)
    return merged


def _line_distance(line: int, start: int, end: int) -> int:
    """Distance from a 1-based line to a half-open 0-based range; 0 inside.

    A pure insertion (empty range) is treated as sitting at its anchor."""
    first = start + 1
    last = max(end, start + 1)
    if first <= line <= last:
        return 0
    return min(abs(line - first), abs(line - last))


def mine_examples(
    archive: BuildArchive,
    taxonomy: list[ErrorCategory],
    before_index: int | None = None,
) -> dict[str, list[FixExample]]:
    """All derivable fix examples grouped by category id, in archive order.

    ``before_index`` restricts mining to builds strictly earlier in the
    archive (history available at that point in time).
    """
    records = archive.records if before_index is None else archive.records[:before_index]
    by_category: dict[str, list[FixExample]] = {}
    seen: set[tuple[str, str, str, str]] = set()
    for record in records:
        if record.outcome != OUTCOME_FAIL:
            continue
        try:
            fixing = find_first_success(archive, record.build_id)
        except NoSubsequentSuccess:
            continue
        if before_index is not None and archive.index_of(fixing.build_id) >= before_index:
            continue
        errors = parse_log(archive.log_text(record.build_id), taxonomy)
        if not errors:
            continue
        for error in select_primary_errors(errors, cap=len(errors)):
            try:
                example, reconstructs = _derive_checked(record, fixing, error)
            except (FilesIdentical, FileMissing):
                continue
            if not reconstructs:
                # multi-segment fix; splicing one segment back would not
                # reproduce the fixed file, so it makes a poor template
                continue
            key = (example.category.id, example.file, example.faulty_segment, example.fixed_segment)
            if key in seen:
                continue
            seen.add(key)
            by_category.setdefault(example.category.id, []).append(example)
    return by_category


def build_example_catalog(
    archive: BuildArchive,
    taxonomy: list[ErrorCategory],
    seed: int,
    before_index: int | None = None,
) -> dict[str, FixExample]:
    """One example per category with any mined examples, chosen uniformly at
    random under ``seed``. Pure function of (archive, taxonomy, seed)."""
    mined = mine_examples(archive, taxonomy, before_index)
    rng = random.Random(seed)
    catalog: dict[str, FixExample] = {}
    for category in taxonomy:
        examples = mined.get(category.id)
        if examples:
            catalog[category.id] = rng.choice(examples)
    return catalog


def catalog_to_dict(catalog: dict[str, FixExample]) -> dict:
    return {
        cid: {
            "category": ex.category.id,
            "file": ex.file,
            "faulty_segment": ex.faulty_segment,
            "fixed_segment": ex.fixed_segment,
            "failing_build": ex.failing_build,
            "fixing_build": ex.fixing_build,
        }
        for cid, ex in catalog.items()
    }


def catalog_from_dict(data: dict, taxonomy: list[ErrorCategory]) -> dict[str, FixExample]:
    by_id = {c.id: c for c in taxonomy}
    catalog = {}
    for cid, entry in data.items():
        catalog[cid] = FixExample(
            category=by_id[entry["category"]],
            faulty_segment=entry["faulty_segment"],
            fixed_segment=entry["fixed_segment"],
            file=entry["file"],
            failing_build=entry["failing_build"],
            fixing_build=entry["fixing_build"],
        )
    return catalog
