"""FastAPI application exposing the repair pipeline.

The service is a localhost sidecar: requests reference archives, fixtures
and result files by path on the host it runs on, matching how the shadow
job sits next to the CI system it watches.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..analytics import (
    DegenerateComparison,
    InconsistentSample,
    classification_summary,
    labels_by_reviewer,
    pass_rate,
    render_classification,
    render_classification_csv,
    render_histogram,
    render_histogram_csv,
    render_pass_rate,
    render_pass_rate_csv,
    sample_size,
    time_histogram,
)
from ..backend import InvalidConfig
from ..config import load_run_config, build_job
from ..corpus import seed_corpus
from ..diagnostics import TaxonomyError, default_taxonomy, load_taxonomy, parse_log
from ..fixmine import BuildArchive, MalformedArchive, build_example_catalog, catalog_to_dict
from ..patching import load_manual_labels
from ..shadow import ConfigError, MalformedResults, WorkspaceError, append_session, load_sessions
from .schemas import (
    DiagnosticModel,
    FixExampleModel,
    MineRequest,
    MineResponse,
    ParseLogRequest,
    ParseLogResponse,
    RepairRequest,
    RepairResponse,
    ReportRequest,
    ReportResponse,
    SampleSizeRequest,
    SampleSizeResponse,
    SeedCorpusRequest,
    SeedCorpusResponse,
    SessionModel,
)

_BAD_REQUEST = (
    ConfigError,
    InvalidConfig,
    MalformedArchive,
    MalformedResults,
    TaxonomyError,
    DegenerateComparison,
    InconsistentSample,
    WorkspaceError,
    ValueError,
    FileNotFoundError,
)


def create_app() -> FastAPI:
    app = FastAPI(title="shadow-repair", version=__version__)

    @app.exception_handler(Exception)
    async def _unhandled(request, exc):  # pragma: no cover - safety net
        raise exc

    def _taxonomy(path: str | None):
        return load_taxonomy(path) if path else default_taxonomy()

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/parse-log", response_model=ParseLogResponse)
    def parse_log_endpoint(request: ParseLogRequest) -> ParseLogResponse:
        try:
            errors = parse_log(request.log, _taxonomy(request.taxonomy))
        except _BAD_REQUEST as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return ParseLogResponse(
            errors=[
                DiagnosticModel(
                    file=e.file,
                    line=e.line,
                    column=e.column,
                    message=e.message,
                    severity=e.severity,
                    category=e.category.id if e.category else None,
                    dependency_related=e.category.dependency_related if e.category else None,
                    raw=e.raw,
                )
                for e in errors
            ]
        )

    @app.post("/mine", response_model=MineResponse)
    def mine_endpoint(request: MineRequest) -> MineResponse:
        try:
            taxonomy = _taxonomy(request.taxonomy)
            archive = BuildArchive(request.archive)
            catalog = build_example_catalog(archive, taxonomy, request.seed)
        except _BAD_REQUEST as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        as_dict = catalog_to_dict(catalog)
        output = None
        if request.output:
            import json

            out_path = Path(request.output)
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_text(json.dumps(as_dict, indent=2, sort_keys=True) + "\n", "utf-8")
            output = str(out_path)
        return MineResponse(
            catalog={cid: FixExampleModel(**entry) for cid, entry in as_dict.items()},
            output=output,
        )

    @app.post("/repair", response_model=RepairResponse)
    def repair_endpoint(request: RepairRequest) -> RepairResponse:
        overrides = {
            "recipe": request.recipe,
            "model": request.model,
            "max_iterations": request.max_iterations,
            "seed": request.seed,
            "results": request.results,
        }
        try:
            config = load_run_config(request.config, overrides)
            job = build_job(config)
            for build_id in request.builds:
                job.archive.index_of(build_id)
        except _BAD_REQUEST as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

        def _run(indexed: tuple[int, str]):
            position, build_id = indexed
            return job.run_session(
                build_id,
                config.recipe,
                config.model,
                config.max_iterations,
                session_id=f"{build_id}:{config.model}:r{config.recipe}:s{config.seed}:{position}",
            )

        try:
            if request.parallel > 1:
                with ThreadPoolExecutor(max_workers=request.parallel) as pool:
                    sessions = list(pool.map(_run, enumerate(request.builds)))
            else:
                sessions = [_run(item) for item in enumerate(request.builds)]
        except (ConfigError, WorkspaceError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        for session in sessions:
            append_session(config.results, session)
        return RepairResponse(
            sessions=[SessionModel.from_session(s) for s in sessions],
            results=str(config.results),
        )

    @app.post("/report", response_model=ReportResponse)
    def report_endpoint(request: ReportRequest) -> ReportResponse:
        try:
            sessions = load_sessions(request.results)
            table = pass_rate(sessions, request.group_by, request.max_cap) if sessions else None
            histogram = time_histogram(sessions)
            summary = None
            if request.labels:
                records = load_manual_labels(request.labels)
                if records:
                    summary = classification_summary(labels_by_reviewer(records))
        except _BAD_REQUEST as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return ReportResponse(
            session_count=len(sessions),
            pass_rate=render_pass_rate(table) if table else "CI pass rate (%)\n(no sessions)\n",
            pass_rate_csv=render_pass_rate_csv(table) if table else "iterations\n",
            classification=render_classification(summary) if summary else None,
            classification_csv=render_classification_csv(summary) if summary else None,
            histogram=render_histogram(histogram),
            histogram_csv=render_histogram_csv(histogram),
        )

    @app.post("/sample-size", response_model=SampleSizeResponse)
    def sample_size_endpoint(request: SampleSizeRequest) -> SampleSizeResponse:
        try:
            n = sample_size(request.p1, request.p2)
        except (DegenerateComparison, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return SampleSizeResponse(n=n)

    @app.post("/seed-corpus", response_model=SeedCorpusResponse)
    def seed_corpus_endpoint(request: SeedCorpusRequest) -> SeedCorpusResponse:
        try:
            manifest = seed_corpus(request.root, compiler=request.compiler, seed=request.seed)
        except (OSError, AssertionError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return SeedCorpusResponse(
            root=str(manifest.root),
            archive=str(manifest.archive_dir),
            failing_builds=manifest.failing_builds,
            categories=manifest.categories,
            config_scripted=str(manifest.config_scripted),
            config_compile=str(manifest.config_compile),
        )

    return app
