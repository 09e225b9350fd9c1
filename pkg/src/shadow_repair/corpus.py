"""Seeded fixture corpus: small C/C++ projects with injected compilation
errors, packaged as a build-history archive plus replay/ground-truth tables.

Each project contributes two failure->fix cycles: a historical pair (mined
for fix examples) and a target failure for the repair loop to solve. Every
snapshot carries its own CI gate under ``ci/``: a compile mode (real
compiler plus static checks) and a scripted mode (token comparison against
the accepted build) that needs no compiler.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .backend import ReplayBackend
from .diagnostics import default_taxonomy, parse_log, select_primary_errors
from .patching import Patch, PatchOrigin, apply_patch, extract_snippet
from .prompting import RECIPE_INPUTS, prompt_digest, token_budget_check
from .fixmine import BuildArchive
from .shadow import CIAdapter, ShadowJob

_BASE_TIME = datetime(2025, 6, 1, tzinfo=timezone.utc)

_CHECK_PY = '''#!/usr/bin/env python3
"""Shadow CI gate for this fixture project: compile mode runs the real
compiler plus any static checks; scripted mode compares the sources'
whitespace-delimited tokens against the accepted build."""
import json
import re
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent
CFG = json.loads((HERE / "config.json").read_text())


def compile_mode() -> int:
    cmd = CFG["compile"] + [str(ROOT / s) for s in CFG["sources"]]
    proc = subprocess.run(cmd, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    if proc.stdout:
        print(proc.stdout, end="")
    if proc.returncode != 0:
        return proc.returncode
    for check in CFG.get("static_checks", []):
        text = (ROOT / check["file"]).read_text()
        if not re.search(check["require_pattern"], text):
            print(f"{check['file']}:{check['line']}:{check['col']}: static-check: {check['message']}")
            return 1
    return 0


def scripted_mode() -> int:
    expected = json.loads((HERE / "expected_tokens.json").read_text())
    failed = False
    for rel, toks in expected.items():
        if (ROOT / rel).read_text().split() != toks:
            print(f"scripted-ci: {rel}: tokens differ from the accepted build")
            failed = True
    return 1 if failed else 0


if __name__ == "__main__":
    mode = sys.argv[1] if len(sys.argv) > 1 else "scripted"
    sys.exit(compile_mode() if mode == "compile" else scripted_mode())
'''

_CHECK_SH = """#!/bin/sh
# minimal scripted CI: byte-compare the repaired file against the accepted build
here="$(dirname "$0")"
cmp -s "$here/../{file}" "$here/expected/{basename}"
"""


@dataclass(frozen=True)
class _Project:
    name: str
    category: str
    files: dict[str, str]  # the accepted (fixed) tree
    faulty_file: str
    line: int  # first line of the fixed segment, 1-based
    fixed_count: int  # lines the single faulty line stands in for
    faulty_line: str
    message: str
    column: int | None = None
    fatal: bool = False
    static_check: dict | None = None


def _p(*lines: str) -> str:
    return "\n".join(lines) + "\n"


PROJECTS: tuple[_Project, ...] = (
    _Project(
        name="prefix-lookup",
        category="undeclared-identifier",
        files={
            "src/main.cpp": _p(
                "#include <string>",
                "",
                "std::string lookupPrefix(int slot) {",
                '    std::string dbPrefix = "rx3:";',
                "    if (slot > 0) {",
                "        dbPrefix += std::to_string(slot);",
                "    }",
                "    return dbPrefix;",
                "}",
                "",
                "int main() {",
                "    return lookupPrefix(2).empty() ? 1 : 0;",
                "}",
            )
        },
        faulty_file="src/main.cpp",
        line=4,
        fixed_count=1,
        faulty_line='    dbPrefix = "rx3:";',
        column=5,
        message="'dbPrefix' was not declared in this scope",
    ),
    _Project(
        name="mesh-init",
        category="missing-include",
        files={
            "src/helpers.h": _p(
                "#pragma once",
                "",
                "inline int meshSides(int cells) {",
                "    return cells * 4;",
                "}",
            ),
            "src/mesh.cpp": _p(
                '#include "helpers.h"',
                "",
                "int main() {",
                "    return meshSides(3) == 12 ? 0 : 1;",
                "}",
            ),
        },
        faulty_file="src/mesh.cpp",
        line=1,
        fixed_count=1,
        faulty_line='#include "helper.h"',
        column=10,
        message="helper.h: No such file or directory",
        fatal=True,
    ),
    _Project(
        name="batch-count",
        category="type-mismatch",
        files={
            "src/calc.cpp": _p(
                "int scaleBatch(int base) {",
                "    int count = 3;",
                "    return base * count;",
                "}",
                "",
                "int main() {",
                "    return scaleBatch(2) == 6 ? 0 : 1;",
                "}",
            )
        },
        faulty_file="src/calc.cpp",
        line=2,
        fixed_count=1,
        faulty_line='    int count = "many";',
        column=17,
        message="invalid conversion from 'const char*' to 'int' [-fpermissive]",
    ),
    _Project(
        name="object-dispatch",
        category="unhandled-enum",
        files={
            "src/dispatch.cpp": _p(
                "#include <string>",
                "",
                "enum class ObjectType { TYPE_I, TYPE_II };",
                "",
                "std::string prefixFor(ObjectType type) {",
                '    std::string dbPrefix = "rx0:";',
                "    if ((type == ObjectType::TYPE_II) || (type == ObjectType::TYPE_I))",
                '    {        dbPrefix = "rx3:";    }',
                "    return dbPrefix;",
                "}",
                "",
                "int main() {",
                '    return prefixFor(ObjectType::TYPE_I) == "rx3:" ? 0 : 1;',
                "}",
            )
        },
        faulty_file="src/dispatch.cpp",
        line=7,
        fixed_count=1,
        faulty_line="    if (type == ObjectType::TYPE_II)",
        column=9,
        message="enumeration value 'TYPE_I' not handled in condition [enum-exhaustiveness]",
        static_check={
            "file": "src/dispatch.cpp",
            "require_pattern": r"\(type == ObjectType::TYPE_I\)",
            "line": 7,
            "col": 9,
            "message": "enumeration value 'TYPE_I' not handled in condition [enum-exhaustiveness]",
        },
    ),
    _Project(
        name="retry-budget",
        category="redefinition",
        files={
            "src/state.cpp": _p(
                "int retryLimit = 3;",
                "int retryBudget = 5;",
                "",
                "int currentLimit() {",
                "    return retryLimit;",
                "}",
                "",
                "int main() {",
                "    return currentLimit() == 3 ? 0 : 1;",
                "}",
            )
        },
        faulty_file="src/state.cpp",
        line=2,
        fixed_count=1,
        faulty_line="int retryLimit = 5;",
        column=5,
        message="redefinition of 'int retryLimit'",
    ),
    _Project(
        name="record-query",
        category="member-not-found",
        files={
            "src/query.cpp": _p(
                "struct Record {",
                "    int key;",
                "    int value;",
                "};",
                "",
                "int lookupKey(Record rec) {",
                "    return rec.key;",
                "}",
                "",
                "int main() {",
                "    Record rec{7, 9};",
                "    return lookupKey(rec) == 7 ? 0 : 1;",
                "}",
            )
        },
        faulty_file="src/query.cpp",
        line=7,
        fixed_count=1,
        faulty_line="    return rec.keyy;",
        column=16,
        message="'struct Record' has no member named 'keyy'; did you mean 'key'?",
    ),
    _Project(
        name="retry-cap",
        category="const-violation",
        files={
            "src/limits.cpp": _p(
                "const int kMaxRetries = 4;",
                "",
                "int capRetries(int limit) {",
                "    if (limit > kMaxRetries) {",
                "        return kMaxRetries;",
                "    }",
                "    return limit;",
                "}",
                "",
                "int main() {",
                "    return capRetries(9) == 4 ? 0 : 1;",
                "}",
            )
        },
        faulty_file="src/limits.cpp",
        line=4,
        fixed_count=3,
        faulty_line="    kMaxRetries = limit;",
        column=17,
        message="assignment of read-only variable 'kMaxRetries'",
    ),
    _Project(
        name="path-join",
        category="signature-mismatch",
        files={
            "src/format.cpp": _p(
                "#include <string>",
                "",
                "std::string joinPath(const std::string& base, const std::string& name) {",
                '    return base + "/" + name;',
                "}",
                "",
                "int main() {",
                '    std::string base = "/data";',
                '    std::string name = "index";',
                "    std::string path = joinPath(base, name);",
                '    return path == "/data/index" ? 0 : 1;',
                "}",
            )
        },
        faulty_file="src/format.cpp",
        line=10,
        fixed_count=1,
        faulty_line="    std::string path = joinPath(base);",
        column=37,
        message="too few arguments to function 'std::string joinPath(const string&, const string&)'",
    ),
    _Project(
        name="expr-total",
        category="syntax-error",
        files={
            "src/parse.cpp": _p(
                "int addOffset(int base, int offset) {",
                "    int total = base + offset;",
                "    return total;",
                "}",
                "",
                "int main() {",
                "    return addOffset(2, 3) == 5 ? 0 : 1;",
                "}",
            )
        },
        faulty_file="src/parse.cpp",
        line=2,
        fixed_count=1,
        faulty_line="    int total = (base + offset;",
        column=None,
        message="expected ')' before ';' token",
    ),
    _Project(
        name="sensor-clamp",
        category="macro-error",
        files={
            "src/util.h": _p(
                "#pragma once",
                "",
                "#define CLAMP(x, lo, hi) ((x) < (lo) ? (lo) : ((x) > (hi) ? (hi) : (x)))",
            ),
            "src/macro.cpp": _p(
                '#include "util.h"',
                "",
                "int main() {",
                "    int raw = 250;",
                "    int v = CLAMP(raw, 0, 100);",
                "    return v == 100 ? 0 : 1;",
                "}",
            ),
        },
        faulty_file="src/macro.cpp",
        line=5,
        fixed_count=1,
        faulty_line="    int v = CLAMP(raw, 0);",
        column=25,
        message='macro "CLAMP" requires 3 arguments, but only 2 given',
    ),
)


@dataclass
class CorpusManifest:
    root: Path
    archive_dir: Path
    failing_builds: list[str]
    historical_failing: list[str]
    categories: list[str]
    digests: dict[str, dict[int, str]]  # build -> recipe -> prompt digest
    truths: dict[str, str]  # build -> ground-truth replacement
    replay_fixture: Path
    ground_truth: Path
    config_scripted: Path
    config_compile: Path
    manifest_file: Path = field(init=False)

    def __post_init__(self):
        self.manifest_file = self.root / "manifest.json"


def _faulty_tree(project: _Project) -> dict[str, str]:
    files = dict(project.files)
    lines = files[project.faulty_file].split("\n")
    start = project.line - 1
    lines[start : start + project.fixed_count] = [project.faulty_line]
    files[project.faulty_file] = "\n".join(lines)
    return files


def _failure_log(project: _Project) -> str:
    loc = f"{project.faulty_file}:{project.line}"
    if project.column is not None:
        loc += f":{project.column}"
    kind = "static-check" if project.static_check else ("fatal error" if project.fatal else "error")
    out = [
        f"[ci] stage compile: {project.faulty_file}",
        f"{project.faulty_file}: In function 'int main()':",
        f"{loc}: {kind}: {project.message}",
        f"{project.line:5d} | {project.faulty_line}",
        "      | " + " " * max(0, (project.column or 1) - 1) + "^~~~",
    ]
    if project.fatal:
        out.append("compilation terminated.")
    out.append("[ci] stage compile: FAILED")
    return "\n".join(out) + "\n"


def _ci_files(project: _Project, compiler: str) -> dict[str, str]:
    sources = sorted(f for f in project.files if f.endswith(".cpp"))
    config = {
        "compile": [compiler, "-std=c++17", "-fsyntax-only"],
        "sources": sources,
        "static_checks": [project.static_check] if project.static_check else [],
    }
    expected_tokens = {project.faulty_file: project.files[project.faulty_file].split()}
    basename = project.faulty_file.rsplit("/", 1)[-1]
    return {
        "ci/check.py": _CHECK_PY,
        "ci/check.sh": _CHECK_SH.format(file=project.faulty_file, basename=basename),
        "ci/config.json": json.dumps(config, indent=2) + "\n",
        "ci/expected_tokens.json": json.dumps(expected_tokens) + "\n",
        f"ci/expected/{basename}": project.files[project.faulty_file],
    }


def _write_build(
    archive_dir: Path,
    build_id: str,
    commit: str,
    timestamp: datetime,
    outcome: str,
    files: dict[str, str],
    log: str,
) -> None:
    build_dir = archive_dir / "builds" / build_id
    (build_dir / "src").mkdir(parents=True)
    meta = {
        "build_id": build_id,
        "commit_id": commit,
        "timestamp": timestamp.isoformat(),
        "outcome": outcome,
    }
    (build_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", "utf-8")
    (build_dir / "log.txt").write_text(log, "utf-8")
    for rel, content in files.items():
        dest = build_dir / "src" / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text(content, "utf-8")
    for script in ("check.py", "check.sh"):
        path = build_dir / "src" / "ci" / script
        path.chmod(0o755)


def _ground_truth(project: _Project) -> str:
    """The replacement the repair loop must produce: the accepted build's
    lines covering the extracted core span of the injected fault."""
    faulty_text = _faulty_tree(project)[project.faulty_file]
    errors = parse_log(_failure_log(project), default_taxonomy())
    error = select_primary_errors(errors, 1)[0]
    snippet = extract_snippet(faulty_text, error)
    c1, c2 = snippet.core_lines
    if c1 != project.line:
        raise AssertionError(f"{project.name}: core does not start at the injected line")
    fixed_lines = project.files[project.faulty_file].split("\n")
    truth = "\n".join(fixed_lines[c1 - 1 : c2 + project.fixed_count - 1])
    patched = apply_patch(
        faulty_text,
        Patch(project.faulty_file, (c1, c2), truth, PatchOrigin("corpus", 0)),
    )
    if patched != project.files[project.faulty_file]:
        raise AssertionError(f"{project.name}: ground truth does not reconstruct the fixed file")
    return truth


def _wrap_completion(truth: str, style: int) -> str:
    """Dress some recorded completions the way models actually answer."""
    if style % 3 == 1:
        return f"```cpp\n{truth}\n```\n"
    if style % 3 == 2:
        return f"Here is the corrected code:\n\n{truth}\n"
    return truth


def seed_corpus(root: str | Path, compiler: str = "g++", seed: int = 0) -> CorpusManifest:
    """Materialize the corpus under ``root`` and return its manifest.

    Writes the build archive, a replay fixture holding ground-truth fixes
    for every (target build, recipe 0..6) prompt, a stochastic ground-truth
    table, and ready-to-run configs for the compile and scripted CI modes.
    """
    root = Path(root)
    archive_dir = root / "archive"
    (archive_dir / "builds").mkdir(parents=True)

    order: list[str] = []
    tick = 0

    def _emit(build_id: str, outcome: str, files: dict[str, str], log: str) -> None:
        nonlocal tick
        _write_build(
            archive_dir,
            build_id,
            commit=f"c{tick:04d}",
            timestamp=_BASE_TIME + timedelta(minutes=tick),
            outcome=outcome,
            files=files,
            log=log,
        )
        order.append(build_id)
        tick += 1

    for project in PROJECTS:
        ci = _ci_files(project, compiler)
        faulty = {**_faulty_tree(project), **ci}
        fixed = {**project.files, **ci}
        _emit(f"{project.name}-hist-fail", "fail", faulty, _failure_log(project))
        _emit(f"{project.name}-hist-pass", "pass", fixed, "[ci] all stages passed\n")
    for project in PROJECTS:
        ci = _ci_files(project, compiler)
        faulty = {**_faulty_tree(project), **ci}
        fixed = {**project.files, **ci}
        _emit(f"{project.name}-fail", "fail", faulty, _failure_log(project))
        _emit(f"{project.name}-pass", "pass", fixed, "[ci] all stages passed\n")

    (archive_dir / "order.txt").write_text("\n".join(order) + "\n", "utf-8")

    archive = BuildArchive(archive_dir)
    job = ShadowJob(
        archive,
        default_taxonomy(),
        ReplayBackend({}),
        CIAdapter(("true",)),
        seed=seed,
    )

    digests: dict[str, dict[int, str]] = {}
    truths: dict[str, str] = {}
    entries = []
    ground_truth: dict[str, str] = {}
    for style, project in enumerate(PROJECTS):
        build_id = f"{project.name}-fail"
        truth = _ground_truth(project)
        truths[build_id] = truth
        digests[build_id] = {}
        record = archive.record(build_id)
        for recipe in RECIPE_INPUTS:
            prompt = job.build_prompt(record, recipe)
            ok, _ = token_budget_check(prompt, 4096)
            if not ok:
                raise AssertionError(f"{project.name}: recipe {recipe} prompt over budget")
            digest = prompt_digest(prompt)
            digests[build_id][recipe] = digest
            ground_truth[digest] = truth
            for iteration in range(1, 6):
                entries.append(
                    {
                        "prompt_digest": digest,
                        "iteration": iteration,
                        "completion": _wrap_completion(truth, style),
                    }
                )

    replay_path = root / "replay_fixture.json"
    replay_path.write_text(json.dumps({"entries": entries}, indent=1) + "\n", "utf-8")
    truth_path = root / "ground_truth.json"
    truth_path.write_text(json.dumps(ground_truth, indent=1) + "\n", "utf-8")

    def _config(name: str, ci_command: list[str], results: str) -> Path:
        path = root / name
        path.write_text(
            json.dumps(
                {
                    "archive": "archive",
                    "backend": {"kind": "replay", "fixture": "replay_fixture.json"},
                    "model": "codellama",
                    "recipe": 6,
                    "max_iterations": 5,
                    "seed": seed,
                    "ci": {"command": ci_command, "timeout_seconds": 120},
                    "results": results,
                },
                indent=2,
            )
            + "\n",
            "utf-8",
        )
        return path

    config_scripted = _config(
        "config-scripted.json", ["python3", "ci/check.py", "scripted"], "results-scripted.jsonl"
    )
    config_compile = _config(
        "config-compile.json", ["python3", "ci/check.py", "compile"], "results-compile.jsonl"
    )

    manifest = CorpusManifest(
        root=root,
        archive_dir=archive_dir,
        failing_builds=[f"{p.name}-fail" for p in PROJECTS],
        historical_failing=[f"{p.name}-hist-fail" for p in PROJECTS],
        categories=[p.category for p in PROJECTS],
        digests=digests,
        truths=truths,
        replay_fixture=replay_path,
        ground_truth=truth_path,
        config_scripted=config_scripted,
        config_compile=config_compile,
    )
    manifest.manifest_file.write_text(
        json.dumps(
            {
                "archive": "archive",
                "failing_builds": manifest.failing_builds,
                "historical_failing": manifest.historical_failing,
                "categories": manifest.categories,
                "digests": {b: {str(r): d for r, d in by.items()} for b, by in digests.items()},
                "configs": ["config-scripted.json", "config-compile.json"],
            },
            indent=2,
        )
        + "\n",
        "utf-8",
    )
    return manifest
