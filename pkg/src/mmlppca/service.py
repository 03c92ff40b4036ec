"""Service layer: request/response models, handlers, and the HTTP app.

The handlers are plain functions on pydantic models and raise the package's
exception taxonomy; the command-line client calls them in-process and the
FastAPI app exposes the same handlers over HTTP.  Both surfaces therefore
share a single contract, and every JSON document carries schema_version so
downstream pipelines can detect format changes.

Error mapping: input problems (InvalidData, InvalidParameter) become HTTP
400, model-domain problems (InvalidRank, DegenerateSpectrum, ...) become
HTTP 422.  The one deliberate exception is a fit whose residual polynomial
has no admissible root: that returns a structured rank-0 fallback report
with status "fallback" rather than an error, so experiment pipelines can
count occurrences.
"""

import dataclasses

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, model_validator

from . import __version__
from .errors import InvalidData, InvalidParameter, InvalidRank, MmlPcaError, NoValidRoot
from .criteria import CRITERIA, select_rank
from .mml import _rank0_codelength, candidate_ranks, ml_estimate, mml_estimate
from .spectrum import as_data_matrix, load_csv, max_rank, spectrum_from_data
from .simlab import parse_config, run_estimation_experiment, run_selection_experiment

__all__ = [
    "SCHEMA_VERSION",
    "FitRequest",
    "FitReport",
    "SelectRequest",
    "SelectReport",
    "SimulateRequest",
    "SimulateReport",
    "handle_fit",
    "handle_select",
    "handle_simulate",
    "app",
]

SCHEMA_VERSION = 1


# ===== Request / response models =====


class _DataCarrier(BaseModel):
    """Shared input contract: exactly one of csv_text or data."""

    csv_text: str | None = Field(default=None, description="raw CSV text, rows = observations")
    data: list[list[float]] | None = Field(default=None, description="data matrix, rows = observations")

    @model_validator(mode="after")
    def _exactly_one_source(self):
        if (self.csv_text is None) == (self.data is None):
            raise ValueError("provide exactly one of csv_text or data")
        return self


class FitRequest(_DataCarrier):
    rank: int = Field(ge=0, description="number of components to fit")
    estimator: str = Field(default="mml", pattern="^(ml|mml)$")


class CodelengthReport(BaseModel):
    """Two-part codelength breakdown in nats."""

    neg_log_likelihood: float
    neg_log_prior: float
    half_log_fisher: float
    quantization: float
    total: float
    param_count: int


class ErrorInfo(BaseModel):
    type: str
    reason: str
    requested_rank: int | None = None


class FitReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    N: int
    K: int
    J: int
    estimator: str
    sigma2: float
    alphas: list[float]
    eigenvalues: list[float]
    codelength: CodelengthReport | None = None
    status: str = "ok"  # "fallback" when rank 0 replaced an infeasible factor fit
    error: ErrorInfo | None = None
    warnings: list[str] = Field(default_factory=list)


class SelectRequest(_DataCarrier):
    criterion: str = Field(default="all", pattern="^(mml|bic|laplace|all)$")


class CriterionReport(BaseModel):
    criterion: str
    scores: dict[int, float]
    selected_J: int
    skipped: dict[int, str] = Field(default_factory=dict)


class SelectReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    N: int
    K: int
    candidates: list[int]
    eigenvalues: list[float]
    reports: dict[str, CriterionReport]
    selected: dict[str, int]
    warnings: list[str] = Field(default_factory=list)


class SimulateRequest(BaseModel):
    suite: str = Field(pattern="^(estimate|select)$")
    config_text: str
    seed: int | None = Field(default=None, description="overrides the config seed")
    replications: int | None = Field(default=None, ge=1, description="overrides every row")
    workers: int | None = Field(default=None, ge=1)


class SimulateReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    suite: str
    rows: list[dict]


# ===== Handlers =====


def _spectrum_of(request):
    if request.csv_text is not None:
        return spectrum_from_data(load_csv(request.csv_text))
    return spectrum_from_data(as_data_matrix(request.data))


def _check_rank_bound(spec, j):
    bound = max_rank(spec.k)
    if j > bound:
        raise InvalidRank(
            f"rank exceeds identifiable maximum: {j} > {bound} for K={spec.k}"
        )


def _fit_report(spec, fit, status="ok", error=None, warnings=()):
    breakdown = None
    if fit.codelength is not None:
        breakdown = CodelengthReport(**dataclasses.asdict(fit.codelength))
    return FitReport(
        N=spec.n_samples,
        K=spec.k,
        J=fit.rank,
        estimator=fit.estimator,
        sigma2=fit.sigma2,
        alphas=[float(a) for a in fit.alphas],
        eigenvalues=[float(d) for d in spec.eigenvalues],
        codelength=breakdown,
        status=status,
        error=error,
        warnings=list(warnings),
    )


def handle_fit(request):
    """Fit at the requested rank; a rootless codelength fit degrades to rank 0.

    The fallback is reported, not hidden: status flips to "fallback", the
    error block records the original request, and the returned parameters
    are the rank-0 fit's.
    """
    spec = _spectrum_of(request)
    j = int(request.rank)
    _check_rank_bound(spec, j)
    if request.estimator == "ml":
        return _fit_report(spec, ml_estimate(spec, j))
    if j == 0:
        return _fit_report(spec, _rank0_codelength(spec))
    try:
        return _fit_report(spec, mml_estimate(spec, j))
    except NoValidRoot as exc:
        info = ErrorInfo(type="NoValidRoot", reason=str(exc), requested_rank=j)
        return _fit_report(
            spec,
            _rank0_codelength(spec),
            status="fallback",
            error=info,
            warnings=[f"rank {j} has no admissible residual variance; reporting the rank-0 fit"],
        )


def handle_select(request):
    """Score every candidate rank under the requested criteria."""
    spec = _spectrum_of(request)
    names = CRITERIA if request.criterion == "all" else (request.criterion,)
    reports = {}
    for name in names:
        rep = select_rank(spec, name)
        reports[name] = CriterionReport(
            criterion=name,
            scores={int(j): float(s) for j, s in sorted(rep.scores.items())},
            selected_J=rep.selected,
            skipped={int(j): r for j, r in sorted(rep.skipped.items())},
        )
    return SelectReport(
        N=spec.n_samples,
        K=spec.k,
        candidates=list(candidate_ranks(spec.k)),
        eigenvalues=[float(d) for d in spec.eigenvalues],
        reports=reports,
        selected={name: reports[name].selected_J for name in reports},
    )


def handle_simulate(request):
    """Run one experiment suite over every row of a YAML config."""
    configs = parse_config(request.config_text, request.suite)
    overrides = {}
    if request.seed is not None:
        overrides["master_seed"] = int(request.seed)
    if request.replications is not None:
        overrides["replications"] = int(request.replications)
    if overrides:
        configs = [dataclasses.replace(c, **overrides) for c in configs]
    runner = run_estimation_experiment if request.suite == "estimate" else run_selection_experiment
    rows = [runner(c, workers=request.workers).to_dict() for c in configs]
    return SimulateReport(suite=request.suite, rows=rows)


# ===== HTTP app =====

app = FastAPI(title="mmlppca", version=__version__)


@app.exception_handler(MmlPcaError)
def _domain_error_handler(request, exc):
    status = 400 if isinstance(exc, (InvalidData, InvalidParameter)) else 422
    return JSONResponse(
        status_code=status,
        content={
            "schema_version": SCHEMA_VERSION,
            "error": {"type": type(exc).__name__, "reason": str(exc)},
        },
    )


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__, "schema_version": SCHEMA_VERSION}


@app.post("/fit", response_model=FitReport)
def fit_endpoint(request: FitRequest):
    return handle_fit(request)


@app.post("/select", response_model=SelectReport)
def select_endpoint(request: SelectRequest):
    return handle_select(request)


@app.post("/simulate", response_model=SimulateReport)
def simulate_endpoint(request: SimulateRequest):
    return handle_simulate(request)
