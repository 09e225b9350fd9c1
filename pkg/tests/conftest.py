"""Shared fixtures: tiny build archives, the enum-dispatch fix pair, and
synthetic session factories."""

from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from shadow_repair.backend import PatchCandidate
from shadow_repair.shadow import CIVerdict, RepairAttempt, RepairSession

BASE_TIME = datetime(2025, 5, 1, tzinfo=timezone.utc)

# The motivating static-check failure: a conditional not exhaustive over the
# enumeration, fixed by broadening the condition.
ENUM_DISPATCH_FAULTY_LINE = "if (type == ObjectType::TYPE_II)"
ENUM_DISPATCH_FIXED_LINE = "if ((type == ObjectType::TYPE_II) || (type == ObjectType::TYPE_I))"

ENUM_DISPATCH_FAULTY_FILE = (
    "// buggy code starts:\n"
    f"{ENUM_DISPATCH_FAULTY_LINE}\n"
    '{        dbPrefix = "rx3:";    }\n'
    "// buggy code ends:\n"
)
ENUM_DISPATCH_FIXED_FILE = ENUM_DISPATCH_FAULTY_FILE.replace(ENUM_DISPATCH_FAULTY_LINE, ENUM_DISPATCH_FIXED_LINE)


def write_archive(root: Path, builds: list[tuple[str, str, dict[str, str], str]]) -> Path:
    """Write a minimal build archive. ``builds`` holds (build_id, outcome,
    files, log) tuples in chronological order."""
    archive = Path(root)
    (archive / "builds").mkdir(parents=True, exist_ok=True)
    order = []
    for i, (build_id, outcome, files, log) in enumerate(builds):
        build_dir = archive / "builds" / build_id
        (build_dir / "src").mkdir(parents=True)
        meta = {
            "build_id": build_id,
            "commit_id": f"c{i:03d}",
            "timestamp": (BASE_TIME + timedelta(minutes=i)).isoformat(),
            "outcome": outcome,
        }
        (build_dir / "meta.json").write_text(json.dumps(meta), "utf-8")
        (build_dir / "log.txt").write_text(log, "utf-8")
        for rel, content in files.items():
            dest = build_dir / "src" / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_text(content, "utf-8")
        order.append(build_id)
    (archive / "order.txt").write_text("\n".join(order) + "\n", "utf-8")
    return archive


def make_session(
    *,
    session_id: str = "s",
    model: str = "codellama",
    recipe: int = 6,
    first_pass: int | None = None,
    attempts: int | None = None,
    total_duration: float = 60.0,
    build: str = "b1",
) -> RepairSession:
    """Synthetic session: passes at iteration ``first_pass`` (None = never),
    with ``attempts`` tries recorded."""
    if attempts is None:
        attempts = first_pass if first_pass is not None else 5
    records = []
    t = BASE_TIME
    for i in range(1, attempts + 1):
        outcome = "pass" if first_pass is not None and i == first_pass else "fail"
        records.append(
            RepairAttempt(
                iteration=i,
                prompt_digest="0" * 64,
                candidate=PatchCandidate(text="x = 1;", model=model, latency=0.01, iteration=i),
                verdict=CIVerdict(outcome, "completed" if outcome == "pass" else "command-failed", "", 1.0),
                started=t,
                ended=t + timedelta(seconds=1),
            )
        )
        t += timedelta(seconds=2)
    final = "pass" if any(a.verdict.outcome == "pass" for a in records) else "fail"
    return RepairSession(
        session_id=session_id,
        failing_build=build,
        model=model,
        recipe=recipe,
        attempts=tuple(records),
        final=final,
        total_duration=total_duration,
        started=BASE_TIME,
        ended=t,
    )


@pytest.fixture()
def enum_dispatch_archive(tmp_path: Path) -> Path:
    """Archive with one resolved failure: the enum-dispatch fix pair."""
    log = (
        "sources/dispatch.cpp:2:5: static-check: enumeration value 'TYPE_I' "
        "not handled in condition [enum-exhaustiveness]\n"
    )
    return write_archive(
        tmp_path / "archive",
        [
            ("f1", "fail", {"sources/dispatch.cpp": ENUM_DISPATCH_FAULTY_FILE}, log),
            ("s1", "pass", {"sources/dispatch.cpp": ENUM_DISPATCH_FIXED_FILE}, "ok\n"),
        ],
    )
