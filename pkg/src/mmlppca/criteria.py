"""Comparator criteria for rank selection: BIC and the Laplace evidence.

Both criteria score the maximum-likelihood fit at each candidate rank and
are returned in nats with lower-is-better orientation, so they can be
compared directly against the two-part codelength from the mml module.
"""

import math

import numpy as np

from .errors import DegenerateSpectrum, InvalidRank
from .mml import (
    DISTINCT_RTOL,
    SelectionReport,
    candidate_ranks,
    free_param_count,
    ml_estimate,
    negative_log_likelihood,
)

__all__ = ["CRITERIA", "bic_score", "laplace_evidence", "select_rank"]

CRITERIA = ("mml", "bic", "laplace")


def bic_score(spec, j):
    """BIC in nats: the ML negative log-likelihood plus (P/2) log N.

    P counts the basis angles, the factor norms and the residual scale,
    the same parameter count the codelength quantizes.
    """
    fit = ml_estimate(spec, j)
    nll = negative_log_likelihood(spec, fit.alphas, fit.sigma2, j)
    p = free_param_count(spec.k, j)
    return nll + 0.5 * p * math.log(spec.n_samples)


def laplace_evidence(spec, j):
    """Negated log marginal likelihood of the rank-j model, Laplace approximated.

    Transcribed from Minka (2000), "Automatic choice of dimensionality for
    PCA" (NIPS 13), whose closed-form approximation for p(D|k) is also
    published as the author's laplace_pca reference code:

        p(D|k) ~ p(U) (prod_{i<=k} d_i)^(-N/2) v^(-N(K-k)/2)
                 (2pi)^((m+k+1)/2) |A_Z|^(-1/2) N^(-k/2)

    where d_i are sample-covariance eigenvalues, v the mean discarded
    eigenvalue, m = Kk - k(k+1)/2 the Stiefel dimension, p(U) the inverse
    volume of the orthant of the Stiefel manifold,

        p(U) = 2^(-k) prod_{i<=k} Gamma((K-i+1)/2) pi^(-(K-i+1)/2),

    and |A_Z| the cross-term Hessian determinant over eigenvalue gaps,

        log|A_Z| = sum_{i<=k} sum_{l>i} [ log(1/dh_l - 1/dh_i)
                                          + log(d_i - d_l) + log N ],

    with dh the model eigenvalues (d_i retained, v for the rest).  The
    rank-independent likelihood constant (NK/2)(log 2pi + 1), which Minka
    drops, is reinstated here so the value is comparable with bic_score;
    the result is negated so lower is better.
    """
    j = int(j)
    if j < 1 or j > spec.k - 1:
        raise InvalidRank(
            f"laplace evidence needs 1 <= j <= K-1, got j={j}; rank 0 is "
            "scored by the isotropic BIC form"
        )
    n, k = spec.n_samples, spec.k
    d = spec.eigenvalues
    v = float(d[j:].mean())

    tol = DISTINCT_RTOL * d[0]
    gaps = d[:j] - d[1 : j + 1]
    if float(gaps.min()) < tol or d[j - 1] - v < tol:
        raise DegenerateSpectrum(
            "tied eigenvalues among the retained set or against the residual "
            f"mean (tolerance {DISTINCT_RTOL:g} * delta_1)"
        )

    log_pu = -j * math.log(2.0)
    for i in range(1, j + 1):
        log_pu += math.lgamma((k - i + 1) / 2.0) - 0.5 * (k - i + 1) * math.log(math.pi)

    log_lik_term = -0.5 * n * (float(np.log(d[:j]).sum()) + (k - j) * math.log(v))

    dh = np.concatenate([d[:j], np.full(k - j, v)])
    log_az = 0.0
    for i in range(j):
        log_az += float(np.log(1.0 / dh[i + 1 :] - 1.0 / dh[i]).sum())
        log_az += float(np.log(d[i] - d[i + 1 :]).sum())
    m = j * k - (j * (j + 1)) // 2
    log_az += m * math.log(n)  # the double sum has exactly m pair terms

    log_evidence = (
        log_pu
        + log_lik_term
        + 0.5 * (m + j + 1) * math.log(2.0 * math.pi)
        - 0.5 * log_az
        - 0.5 * j * math.log(n)
        - 0.5 * n * k * (math.log(2.0 * math.pi) + 1.0)
    )
    return -log_evidence


def _score_candidate(spec, criterion, j):
    if criterion == "bic":
        return bic_score(spec, j)
    if j == 0:
        return bic_score(spec, 0)
    return laplace_evidence(spec, j)


def select_rank(spec, criterion, candidates=None):
    """Score every candidate rank under one criterion and pick the minimum.

    criterion is one of "mml", "bic", "laplace".  The MML branch delegates
    to select_rank_mml; the others score maximum-likelihood fits.  The
    Laplace evidence is undefined at rank 0, so that candidate is scored
    by the isotropic BIC form.  Candidates default to 0..max_rank(K).
    Ties resolve to the smaller rank.
    """
    if criterion not in CRITERIA:
        raise InvalidRank(f"unknown criterion {criterion!r}; choose from {CRITERIA}")
    if criterion == "mml":
        from .mml import select_rank_mml

        return select_rank_mml(spec, candidates)

    scores = {}
    skipped = {}
    if candidates is None:
        candidates = candidate_ranks(spec.k)
    for j in candidates:
        try:
            scores[j] = _score_candidate(spec, criterion, j)
        except (InvalidRank, DegenerateSpectrum) as exc:
            skipped[j] = f"{type(exc).__name__}: {exc}"
    if not scores:
        raise InvalidRank("no candidate rank could be scored")
    selected = min(scores, key=lambda jj: (scores[jj], jj))
    return SelectionReport(
        criterion=criterion, scores=scores, selected=selected, skipped=skipped
    )
