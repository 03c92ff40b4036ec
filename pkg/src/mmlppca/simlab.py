"""Seeded Monte-Carlo experiments for estimator and selection-rate studies.

Each replication draws factor directions uniformly on the unit sphere (not
orthogonalised), latent scores and isotropic noise, fits or selects on the
resulting sample, and records log-residual-scale statistics and the KL
divergence from the generating covariance to the fitted one.

Reproducibility contract: the stream for replication r of a run seeded s
is derived from the pair (s, r), never from call order, so results are
identical no matter how replications are scheduled across workers.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import yaml

from .criteria import CRITERIA, select_rank
from .errors import InvalidData, InvalidParameter, InvalidRank, NoValidRoot
from .mml import (
    _isotropic_fit,
    _select_mml_with_fits,
    candidate_ranks,
    ml_estimate,
    mml_estimate,
)
from .spectrum import max_rank, spectrum_from_data

__all__ = [
    "DEFAULT_SEED",
    "SimConfig",
    "SimResult",
    "generate_dataset",
    "metric_s1s2",
    "kl_gaussian",
    "kl_gaussian_eigen",
    "run_estimation_experiment",
    "run_selection_experiment",
    "load_config",
    "parse_config",
]

DEFAULT_SEED = 0xC0FFEE

ESTIMATORS = ("ml", "mml")


@dataclass(frozen=True)
class SimConfig:
    """One experiment cell: sample size, dimension, generating model, run size."""

    n_samples: int
    k: int
    true_rank: int
    replications: int
    master_seed: int = DEFAULT_SEED
    true_alphas: tuple = None
    true_sigma2: float = 1.0
    estimators: tuple = ESTIMATORS
    criteria: tuple = CRITERIA

    def __post_init__(self):
        if self.n_samples < 2 or self.k < 2:
            raise InvalidData(f"need N >= 2 and K >= 2, got N={self.n_samples}, K={self.k}")
        if not 0 <= self.true_rank <= max_rank(self.k):
            raise InvalidData(
                f"true rank {self.true_rank} outside 0..{max_rank(self.k)} for K={self.k}"
            )
        alphas = self.true_alphas
        if alphas is None:
            alphas = (1.0,) * self.true_rank
        alphas = tuple(float(a) for a in alphas)
        if len(alphas) != self.true_rank or any(a <= 0 for a in alphas):
            raise InvalidData("true_alphas must be positive and match true_rank")
        object.__setattr__(self, "true_alphas", alphas)
        if self.true_sigma2 <= 0:
            raise InvalidData("true_sigma2 must be positive")
        if self.replications < 1:
            raise InvalidData("replications must be at least 1")
        if self.master_seed < 0:
            raise InvalidData("master_seed must be non-negative")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise InvalidData(f"unknown estimator {e!r}")
        for c in self.criteria:
            if c not in CRITERIA:
                raise InvalidData(f"unknown criterion {c!r}")


@dataclass(frozen=True)
class SimResult:
    """Aggregates of one experiment cell, with Monte-Carlo standard errors."""

    config: SimConfig
    suite: str
    replications: int
    estimates: dict | None = None
    selections: dict | None = None
    warnings: tuple = ()

    def to_dict(self):
        cfg = {
            "N": self.config.n_samples,
            "K": self.config.k,
            "J": self.config.true_rank,
            "true_alphas": list(self.config.true_alphas),
            "true_sigma2": self.config.true_sigma2,
            "replications": self.config.replications,
            "master_seed": self.config.master_seed,
        }
        out = {
            "suite": self.suite,
            "config": cfg,
            "replications": self.replications,
            "warnings": list(self.warnings),
        }
        if self.estimates is not None:
            out["estimates"] = self.estimates
        if self.selections is not None:
            out["selections"] = self.selections
        return out


# ===== Generation =====


def _replication_rng(master_seed, replicate_index):
    # Streams keyed on (seed, index): invariant to scheduling and partitioning.
    return np.random.default_rng(np.random.SeedSequence((int(master_seed), int(replicate_index))))


def _generate_with_truth(config, replicate_index):
    """Data matrix plus the scaled direction rows used to generate it.

    Draw order is fixed (directions, then scores, then noise) so a stream
    always produces the same dataset.
    """
    rng = _replication_rng(config.master_seed, replicate_index)
    n, k, j = config.n_samples, config.k, config.true_rank
    if j > 0:
        raw = rng.standard_normal((j, k))
        directions = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        a_rows = directions * np.asarray(config.true_alphas)[:, None]
        scores = rng.standard_normal((n, j))
        data = scores @ a_rows
    else:
        a_rows = np.empty((0, k))
        data = np.zeros((n, k))
    data = data + math.sqrt(config.true_sigma2) * rng.standard_normal((n, k))
    return data, a_rows


def generate_dataset(config, replicate_index):
    """The data matrix for one replication of a configured experiment."""
    data, _ = _generate_with_truth(config, replicate_index)
    return data


# ===== Metrics =====


def metric_s1s2(sigma2_hat):
    """(log sigma_hat, (log sigma_hat)^2) for one fitted residual variance."""
    if not np.isfinite(sigma2_hat) or sigma2_hat <= 0:
        raise InvalidParameter(f"sigma2_hat must be positive, got {sigma2_hat}")
    s1 = 0.5 * math.log(sigma2_hat)
    return s1, s1 * s1


def kl_gaussian(cov0, cov1):
    """KL divergence in nats between zero-mean Gaussians with the given covariances.

    Returns E_0[log p_0 / log p_1] = (tr(C1^-1 C0) + log|C1| - log|C0| - K) / 2.
    """
    c0 = np.asarray(cov0, dtype=float)
    c1 = np.asarray(cov1, dtype=float)
    if c0.shape != c1.shape or c0.ndim != 2 or c0.shape[0] != c0.shape[1]:
        raise InvalidParameter(f"covariances must share a square shape, got {c0.shape} and {c1.shape}")
    k = c0.shape[0]
    try:
        chol0 = np.linalg.cholesky((c0 + c0.T) / 2.0)
        chol1 = np.linalg.cholesky((c1 + c1.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise InvalidParameter(f"covariances must be positive definite: {exc}") from exc
    logdet0 = 2.0 * float(np.log(np.diag(chol0)).sum())
    logdet1 = 2.0 * float(np.log(np.diag(chol1)).sum())
    half = np.linalg.solve(chol1, c0)
    trace = float(np.trace(np.linalg.solve(chol1.T, half)))
    return 0.5 * (trace + logdet1 - logdet0 - k)


def kl_gaussian_eigen(model_eigs0, model_eigs1):
    """KL for two covariances sharing one eigenbasis, from eigenvalues alone."""
    e0 = np.asarray(model_eigs0, dtype=float)
    e1 = np.asarray(model_eigs1, dtype=float)
    if e0.shape != e1.shape or e0.ndim != 1:
        raise InvalidParameter("eigenvalue vectors must share a 1-d shape")
    if np.any(e0 <= 0) or np.any(e1 <= 0):
        raise InvalidParameter("eigenvalues must be positive")
    r = e0 / e1
    return 0.5 * float((r - np.log(r) - 1.0).sum())


def _kl_truth_vs_fit(a_rows, sigma2_true, fit):
    """KL from the generating covariance to a fitted one, via structured forms.

    The generating covariance is A'A + sigma2 I with A the scaled direction
    rows; the fitted inverse is expanded over its basis columns, so no
    dense matrix is ever inverted.
    """
    k = fit.k
    jt = a_rows.shape[0]
    trace_true = float((a_rows * a_rows).sum()) + k * sigma2_true
    if jt > 0:
        gram = a_rows @ a_rows.T
        lam = np.linalg.eigvalsh(gram)
        logdet_true = float(np.log(lam + sigma2_true).sum()) + (k - jt) * math.log(sigma2_true)
    else:
        logdet_true = k * math.log(sigma2_true)

    model = fit.model_eigenvalues()
    logdet_fit = float(np.log(model).sum())
    trace_term = trace_true / fit.sigma2
    if fit.rank > 0:
        weights = 1.0 / (fit.alphas**2 + fit.sigma2) - 1.0 / fit.sigma2
        au = a_rows @ fit.basis  # (J_true, J_fit)
        quad = (au * au).sum(axis=0) + sigma2_true
        trace_term += float((weights * quad).sum())
    return 0.5 * (trace_term + logdet_fit - logdet_true - k)


# ===== Runners =====


def _resolve_workers(workers):
    requested = 1 if workers is None else max(1, int(workers))
    cap = os.environ.get("MMLPPCA_THREADS", "").strip()
    if cap:
        try:
            cap_n = int(cap)
        except ValueError:
            raise InvalidData(f"MMLPPCA_THREADS must be an integer, got {cap!r}")
        if cap_n >= 1:
            requested = min(requested, cap_n)
    return requested


def _run_indexed(task, count, workers):
    if workers <= 1:
        for r in range(count):
            task(r)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # Consume the iterator so worker exceptions propagate.
        list(pool.map(task, range(count)))


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    se = float(values.std(ddof=1) / math.sqrt(values.size))
    return mean, se


def _fit_at_rank(spc, j, estimator):
    """Fit at a fixed rank; the mml estimator falls back to rank 0 on NoValidRoot."""
    if estimator == "ml":
        return ml_estimate(spc, j), False
    if j == 0:
        return _isotropic_fit(spc, "mml"), False
    try:
        return mml_estimate(spc, j), False
    except NoValidRoot:
        return _isotropic_fit(spc, "mml"), True


def run_estimation_experiment(config, workers=None):
    """Repeatedly fit at the generating rank and aggregate S1, S2 and KL.

    S1 averages log sigma_hat (zero is an unbiased log-scale), S2 averages
    its square, KL averages the divergence from the generating covariance
    to the fitted one.  Replications where the minimum-message-length fit
    has no admissible root fall back to the rank-0 fit and are counted.
    """
    workers = _resolve_workers(workers)
    reps = config.replications
    names = tuple(config.estimators)
    s1 = {e: np.empty(reps) for e in names}
    kl = {e: np.empty(reps) for e in names}
    fallbacks = {e: np.zeros(reps, dtype=bool) for e in names}

    def task(r):
        data, a_rows = _generate_with_truth(config, r)
        spc = spectrum_from_data(data)
        for e in names:
            fit, fell_back = _fit_at_rank(spc, config.true_rank, e)
            s1[e][r] = 0.5 * math.log(fit.sigma2)
            kl[e][r] = _kl_truth_vs_fit(a_rows, config.true_sigma2, fit)
            fallbacks[e][r] = fell_back

    _run_indexed(task, reps, workers)

    warnings = []
    if reps < 2:
        warnings.append("single replication: standard errors are zero by construction")
    estimates = {}
    for e in names:
        s1_mean, s1_se = _mean_se(s1[e])
        s2_mean, s2_se = _mean_se(s1[e] ** 2)
        kl_mean, kl_se = _mean_se(kl[e])
        estimates[e] = {
            "s1": s1_mean,
            "s2": s2_mean,
            "kl": kl_mean,
            "se_s1": s1_se,
            "se_s2": s2_se,
            "se_kl": kl_se,
            "fallbacks": int(fallbacks[e].sum()),
        }
    return SimResult(
        config=config,
        suite="estimate",
        replications=reps,
        estimates=estimates,
        warnings=tuple(warnings),
    )


def run_selection_experiment(config, workers=None):
    """Repeatedly select a rank under each criterion and tally the outcomes.

    Records the fraction of replications selecting below, at and above the
    generating rank, plus the KL from the generating covariance to the
    model fitted at the selected rank (the criterion's own estimator for
    mml, maximum likelihood for bic and laplace).
    """
    workers = _resolve_workers(workers)
    reps = config.replications
    names = tuple(config.criteria)
    chosen = {c: np.empty(reps, dtype=int) for c in names}
    kl = {c: np.empty(reps) for c in names}
    fallbacks = {c: np.zeros(reps, dtype=bool) for c in names}
    # The tallies compare factor models against each other, so rank 0 is
    # not scored; it reappears only as the fallback when no factor rank
    # is admissible for a replication.
    factor_ranks = [j for j in candidate_ranks(config.k) if j >= 1] or [0]

    def task(r):
        data, a_rows = _generate_with_truth(config, r)
        spc = spectrum_from_data(data)
        for c in names:
            try:
                if c == "mml":
                    report, fits = _select_mml_with_fits(spc, factor_ranks)
                    fit = fits[report.selected]
                else:
                    report = select_rank(spc, c, factor_ranks)
                    fit = ml_estimate(spc, report.selected)
                chosen[c][r] = report.selected
            except InvalidRank:
                fit = _isotropic_fit(spc, "mml" if c == "mml" else "ml")
                chosen[c][r] = 0
                fallbacks[c][r] = True
            kl[c][r] = _kl_truth_vs_fit(a_rows, config.true_sigma2, fit)

    _run_indexed(task, reps, workers)

    warnings = []
    if reps < 2:
        warnings.append("single replication: standard errors are zero by construction")
    selections = {}
    for c in names:
        sel = chosen[c]
        below = float((sel < config.true_rank).mean())
        equal = float((sel == config.true_rank).mean())
        above = float((sel > config.true_rank).mean())
        kl_mean, kl_se = _mean_se(kl[c])
        selections[c] = {
            "rate_below": below,
            "rate_equal": equal,
            "rate_above": above,
            "se_below": math.sqrt(below * (1.0 - below) / reps),
            "se_equal": math.sqrt(equal * (1.0 - equal) / reps),
            "se_above": math.sqrt(above * (1.0 - above) / reps),
            "kl": kl_mean,
            "se_kl": kl_se,
            "counts": {
                "below": int((sel < config.true_rank).sum()),
                "equal": int((sel == config.true_rank).sum()),
                "above": int((sel > config.true_rank).sum()),
            },
            "fallbacks": int(fallbacks[c].sum()),
        }
    return SimResult(
        config=config,
        suite="select",
        replications=reps,
        selections=selections,
        warnings=tuple(warnings),
    )


# ===== Config files =====

_ROW_KEYS = {"N", "K", "J", "alphas", "sigma2", "replications"}
_TOP_KEYS = {"suite", "seed", "replications", "estimators", "criteria", "sigma2", "rows"}


def load_config(path, suite):
    """Parse a YAML experiment config file into a list of SimConfig cells.

    Top level: suite (optional, must match), seed, replications, sigma2,
    estimators or criteria, and rows, a list of {N, K, J} mappings with
    optional per-row alphas, sigma2 and replications overrides.  Unknown
    keys are rejected by name so typos fail loudly.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidData(f"cannot read config: {exc}") from exc
    return parse_config(text, suite)


def parse_config(text, suite):
    """Parse YAML config text; same contract as load_config."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidData(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidData("config must be a mapping at top level")

    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise InvalidData(f"unknown config keys: {', '.join(unknown)}")
    declared = raw.get("suite")
    if declared is not None and declared != suite:
        raise InvalidData(f"config declares suite {declared!r} but {suite!r} was requested")

    seed = raw.get("seed", DEFAULT_SEED)
    default_reps = raw.get("replications", 1000)
    default_sigma2 = raw.get("sigma2", 1.0)
    rows = raw.get("rows")
    if not isinstance(rows, list) or not rows:
        raise InvalidData("config must contain a non-empty 'rows' list")

    extra = {}
    if suite == "estimate" and "estimators" in raw:
        extra["estimators"] = tuple(raw["estimators"])
    if suite == "select" and "criteria" in raw:
        extra["criteria"] = tuple(raw["criteria"])
    if suite == "estimate" and "criteria" in raw:
        raise InvalidData("unknown config keys: criteria (not used by the estimate suite)")
    if suite == "select" and "estimators" in raw:
        raise InvalidData("unknown config keys: estimators (not used by the select suite)")

    configs = []
    for idx, row in enumerate(rows):
        if not isinstance(row, dict):
            raise InvalidData(f"row {idx} must be a mapping")
        unknown = sorted(set(row) - _ROW_KEYS)
        if unknown:
            raise InvalidData(f"row {idx} has unknown keys: {', '.join(unknown)}")
        missing = sorted({"N", "K", "J"} - set(row))
        if missing:
            raise InvalidData(f"row {idx} is missing keys: {', '.join(missing)}")
        try:
            configs.append(
                SimConfig(
                    n_samples=int(row["N"]),
                    k=int(row["K"]),
                    true_rank=int(row["J"]),
                    replications=int(row.get("replications", default_reps)),
                    master_seed=int(seed),
                    true_alphas=row.get("alphas"),
                    true_sigma2=float(row.get("sigma2", default_sigma2)),
                    **extra,
                )
            )
        except (TypeError, ValueError) as exc:
            raise InvalidData(f"row {idx} is malformed: {exc}") from exc
    return configs
