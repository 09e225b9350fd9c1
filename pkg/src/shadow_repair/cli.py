"""Command-line client for the repair service.

Every command builds a service request and sends it over HTTP. By default
the service runs in-process (no server needed); ``--server URL`` points the
client at a running instance instead.

Exit codes: 0 success/pass, 1 repair exhausted, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_EXHAUSTED = 1
EXIT_USAGE = 2


def _request(server: str | None, path: str, payload: dict) -> dict:
    """POST to the service, in-process unless a server URL is given."""
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            response = client.post(path, json=payload)
    else:
        from .service import create_app

        async def _call() -> httpx.Response:
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://shadow-repair.internal", timeout=None
            ) as client:
                return await client.post(path, json=payload)

        response = asyncio.run(_call())
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except json.JSONDecodeError:
            detail = response.text
        _fail(f"{path}: {detail}")
    return response.json()


def _fail(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(EXIT_USAGE)


def cmd_parse_log(args: argparse.Namespace) -> int:
    path = Path(args.log)
    if not path.is_file():
        _fail(f"log file not found: {path}")
    body = _request(
        args.server,
        "/parse-log",
        {"log": path.read_text("utf-8"), "taxonomy": args.taxonomy},
    )
    errors = body["errors"]
    if errors:
        widths = (
            max(len(e["file"]) for e in errors),
            max(len(str(e["line"])) for e in errors),
            max(len(e["category"] or "-") for e in errors),
        )
        for e in errors:
            location = f"{e['file']}:{e['line']}" + (f":{e['column']}" if e["column"] else "")
            print(
                f"{location.ljust(widths[0] + widths[1] + 2)}  "
                f"{(e['category'] or '-').ljust(widths[2])}  {e['message']}"
            )
    print(f"{len(errors)} error(s)")
    return EXIT_OK


def cmd_mine(args: argparse.Namespace) -> int:
    body = _request(
        args.server,
        "/mine",
        {
            "archive": args.archive,
            "taxonomy": args.taxonomy,
            "seed": args.seed,
            "output": args.output,
        },
    )
    catalog = body["catalog"]
    for category in sorted(catalog):
        entry = catalog[category]
        print(f"{category}: {entry['file']} ({entry['failing_build']} -> {entry['fixing_build']})")
    print(f"{len(catalog)} example(s)" + (f" written to {body['output']}" if body["output"] else ""))
    return EXIT_OK


def cmd_repair(args: argparse.Namespace) -> int:
    body = _request(
        args.server,
        "/repair",
        {
            "config": args.config,
            "builds": args.builds,
            "recipe": args.recipe,
            "model": args.model,
            "max_iterations": args.max_iter,
            "seed": args.seed,
            "results": args.results,
            "parallel": args.parallel,
        },
    )
    exhausted = 0
    for session in body["sessions"]:
        build = session["failing_build"]
        for attempt in session["attempts"]:
            verdict = attempt["verdict"]
            print(
                f"[{build}] iteration {attempt['iteration']}: {verdict['outcome']}"
                f" ({verdict['stage_reached']}, {verdict['duration']:.1f}s)"
            )
        if session["note"]:
            print(f"[{build}] note: {session['note']}")
        print(
            f"[{build}] final: {session['final']} after {len(session['attempts'])} attempt(s)"
            f" in {session['total_duration']:.1f}s"
        )
        if session["final"] != "pass":
            exhausted += 1
    print(f"results appended to {body['results']}")
    return EXIT_EXHAUSTED if exhausted else EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    body = _request(
        args.server,
        "/report",
        {
            "results": args.results,
            "labels": args.labels,
            "group_by": args.group_by,
            "max_cap": args.max_cap,
        },
    )
    print(body["pass_rate"])
    if body["classification"]:
        print(body["classification"])
    print(body["histogram"])
    if args.csv_dir:
        csv_dir = Path(args.csv_dir)
        csv_dir.mkdir(parents=True, exist_ok=True)
        (csv_dir / "pass_rate.csv").write_text(body["pass_rate_csv"], "utf-8")
        (csv_dir / "histogram.csv").write_text(body["histogram_csv"], "utf-8")
        written = ["pass_rate.csv", "histogram.csv"]
        if body["classification_csv"]:
            (csv_dir / "classification.csv").write_text(body["classification_csv"], "utf-8")
            written.append("classification.csv")
        print(f"CSV written to {csv_dir}: {', '.join(written)}")
    else:
        print("histogram CSV:")
        print(body["histogram_csv"], end="")
    return EXIT_OK


def cmd_sample_size(args: argparse.Namespace) -> int:
    body = _request(args.server, "/sample-size", {"p1": args.p1, "p2": args.p2})
    print(body["n"])
    return EXIT_OK


def cmd_seed_corpus(args: argparse.Namespace) -> int:
    body = _request(
        args.server,
        "/seed-corpus",
        {"root": args.root, "compiler": args.compiler, "seed": args.seed},
    )
    print(f"corpus written to {body['root']}")
    print(f"archive: {body['archive']} ({len(body['failing_builds'])} repairable failures)")
    print(f"categories: {', '.join(sorted(set(body['categories'])))}")
    print(f"configs: {body['config_scripted']} | {body['config_compile']}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shadow-repair",
        description="Shadow CI auto-repair: parse failures, mine fixes, repair builds, report.",
    )
    parser.add_argument("--server", help="URL of a running shadow-repair service", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse-log", help="print structured errors from a build log")
    p.add_argument("log")
    p.add_argument("--taxonomy", help="taxonomy file (defaults to the shipped 14 categories)")
    p.set_defaults(func=cmd_parse_log)

    p = sub.add_parser("mine", help="mine one human fix example per error category")
    p.add_argument("archive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--taxonomy")
    p.add_argument("--output", help="write the catalog to this JSON file")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("repair", help="run repair sessions for failing builds")
    p.add_argument("builds", nargs="+", metavar="BUILD_ID")
    p.add_argument("--config", required=True)
    p.add_argument("--recipe", type=int)
    p.add_argument("--model")
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--seed", type=int)
    p.add_argument("--results")
    p.add_argument("--parallel", type=int, default=1, metavar="N")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("report", help="pass-rate tables, fix analysis, fix-time histogram")
    p.add_argument("results")
    p.add_argument("--labels", help="manual reviewer label file (JSONL)")
    p.add_argument("--group-by", choices=("model", "recipe"), default="model")
    p.add_argument("--max-cap", type=int, default=5)
    p.add_argument("--csv-dir", help="also write CSV tables into this directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sample-size", help="binary-outcome sample size for two pass rates")
    p.add_argument("p1", type=float)
    p.add_argument("p2", type=float)
    p.set_defaults(func=cmd_sample_size)

    p = sub.add_parser("seed-corpus", help="write the seeded fixture corpus")
    p.add_argument("root")
    p.add_argument("--compiler", default="g++")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_seed_corpus)

    p = sub.add_parser("serve", help="run the service over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8035)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except httpx.HTTPError as exc:
        print(f"error: cannot reach service: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
