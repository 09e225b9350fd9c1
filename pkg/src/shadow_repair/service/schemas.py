"""Request/response models for the service API."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..shadow import RepairSession


class DiagnosticModel(BaseModel):
    file: str
    line: int
    column: int | None = None
    message: str
    severity: str
    category: str | None = None
    dependency_related: bool | None = None
    raw: str


class ParseLogRequest(BaseModel):
    log: str
    taxonomy: str | None = None  # path to a taxonomy file; default taxonomy otherwise


class ParseLogResponse(BaseModel):
    errors: list[DiagnosticModel]


class FixExampleModel(BaseModel):
    category: str
    file: str
    faulty_segment: str
    fixed_segment: str
    failing_build: str
    fixing_build: str


class MineRequest(BaseModel):
    archive: str
    taxonomy: str | None = None
    seed: int = 0
    output: str | None = None  # write the catalog here as JSON when given


class MineResponse(BaseModel):
    catalog: dict[str, FixExampleModel]
    output: str | None = None


class CandidateModel(BaseModel):
    text: str
    model: str
    latency: float
    iteration: int


class VerdictModel(BaseModel):
    outcome: str
    stage_reached: str
    log: str
    duration: float


class AttemptModel(BaseModel):
    iteration: int
    prompt_digest: str
    candidate: CandidateModel | None = None
    verdict: VerdictModel
    started: str
    ended: str


class SessionModel(BaseModel):
    session_id: str
    failing_build: str
    model: str
    recipe: int
    final: str
    total_duration: float
    started: str
    ended: str
    note: str | None = None
    attempts: list[AttemptModel]

    @classmethod
    def from_session(cls, session: RepairSession) -> "SessionModel":
        from ..shadow import session_to_dict

        return cls.model_validate(session_to_dict(session))


class RepairRequest(BaseModel):
    config: str  # path to the run configuration file
    builds: list[str] = Field(min_length=1)
    recipe: int | None = None
    model: str | None = None
    max_iterations: int | None = None
    seed: int | None = None
    results: str | None = None
    parallel: int = 1


class RepairResponse(BaseModel):
    sessions: list[SessionModel]
    results: str


class ReportRequest(BaseModel):
    results: str
    labels: str | None = None
    group_by: str = "model"
    max_cap: int = 5


class ReportResponse(BaseModel):
    session_count: int
    pass_rate: str
    pass_rate_csv: str
    classification: str | None = None
    classification_csv: str | None = None
    histogram: str
    histogram_csv: str


class SampleSizeRequest(BaseModel):
    p1: float
    p2: float


class SampleSizeResponse(BaseModel):
    n: int


class SeedCorpusRequest(BaseModel):
    root: str
    compiler: str = "g++"
    seed: int = 0


class SeedCorpusResponse(BaseModel):
    root: str
    archive: str
    failing_builds: list[str]
    categories: list[str]
    config_scripted: str
    config_compile: str
