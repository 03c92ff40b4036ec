"""Two-part codelength estimation and rank selection for probabilistic PCA.

The model for a centered K-dimensional sample is a rank-J factor
covariance, Sigma = A A' + sigma^2 I, where A has orthogonal columns with
norms alpha_1 > ... > alpha_J.  At the maximum-likelihood basis (the top-J
eigenvectors of the sample covariance) every quantity in this module
reduces to a function of the sample eigenvalues delta_1 >= ... >= delta_K,
the sample count N, and (alpha, sigma).

The codelength of data plus parameters is

    total = -log likelihood - log prior + (1/2) log det Fisher
            + quantization penalty,

and the residual variance tau = sigma^2 that minimises it is a root of a
polynomial of degree J + 1 (built in residual_polynomial_coefficients).
Only stationary points inside (0, delta_J) are compared: the codelength
expression diverges to -infinity as tau approaches delta_J from below, an
artifact of the approximation breaking down at the boundary, so boundary
values are never candidates.

The factor-basis parameters enter the prior and the Fisher determinant
only through a shared Jacobian factor that cancels exactly between the two
terms, so it is never materialised; log_prior and log_fisher_det are
only meaningful summed, as in full_codelength.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateSpectrum,
    DomainError,
    IllConditionedPolynomial,
    InvalidParameter,
    InvalidRank,
    NoValidRoot,
)
from .spectrum import Spectrum, max_rank

__all__ = [
    "PcaFit",
    "CodelengthBreakdown",
    "MmlPolynomial",
    "SelectionReport",
    "DISTINCT_RTOL",
    "esp",
    "residual_polynomial_coefficients",
    "mml_polynomial",
    "find_real_roots",
    "ml_estimate",
    "mml_estimate",
    "negative_log_likelihood",
    "concentrated_codelength",
    "log_multivariate_gamma",
    "log_prior",
    "log_fisher_det",
    "quantization_nats",
    "free_param_count",
    "full_codelength",
    "select_rank_mml",
    "candidate_ranks",
]

# Eigenvalues (or squared factor norms) closer than this, relative to the
# largest eigenvalue, are treated as tied and the candidate rank rejected.
DISTINCT_RTOL = 1e-9

# Root acceptance: |p(tau)| <= RESIDUAL_RTOL * max|a_i| * max(1, tau)^deg.
_RESIDUAL_RTOL = 1e-9

# Leading coefficient below this fraction of the largest coefficient makes
# the companion matrix (and the degree itself) unreliable.
_LEADING_RTOL = 1e-14

_EULER_GAMMA = 0.5772156649015329

# Optimal quantizing-lattice constants for 1, 2 and 3 dimensions.
_KAPPA = {
    1: 1.0 / 12.0,
    2: 5.0 / (36.0 * math.sqrt(3.0)),
    3: 19.0 / (192.0 * 2.0 ** (1.0 / 3.0)),
}


# ===== Types =====


@dataclass(frozen=True)
class CodelengthBreakdown:
    """Additive parts of a two-part codelength, in nats."""

    neg_log_likelihood: float
    neg_log_prior: float
    half_log_fisher: float
    quantization: float
    total: float
    param_count: int


@dataclass(frozen=True)
class PcaFit:
    """A fitted rank-J covariance: basis columns, factor norms, residual variance."""

    rank: int
    alphas: np.ndarray
    sigma2: float
    basis: np.ndarray
    estimator: str
    codelength: CodelengthBreakdown | None = None

    @property
    def k(self):
        return self.basis.shape[0]

    def model_eigenvalues(self):
        """Eigenvalues of the fitted covariance: alpha_j^2 + sigma^2 then sigma^2."""
        k = self.k
        out = np.full(k, self.sigma2)
        out[: self.rank] = self.alphas**2 + self.sigma2
        return out

    def covariance(self):
        """Dense fitted covariance basis diag(alpha^2) basis' + sigma^2 I."""
        k = self.k
        cov = self.sigma2 * np.eye(k)
        if self.rank > 0:
            cov += (self.basis * (self.alphas**2)) @ self.basis.T
        return cov


@dataclass(frozen=True)
class MmlPolynomial:
    """Stationary-point polynomial for the residual variance tau.

    coefficients are a_0 .. a_{J+1} in ascending powers of tau; roots are
    admissible only inside (0, domain_upper) with domain_upper = delta_J.
    """

    rank: int
    coefficients: np.ndarray
    domain_upper: float


@dataclass(frozen=True)
class SelectionReport:
    """Result of scoring every candidate rank under one criterion.

    scores maps candidate rank to nats (lower is better); candidates that
    could not be scored appear in skipped with a reason instead.
    """

    criterion: str
    scores: dict
    selected: int
    skipped: dict


# ===== Small shared helpers =====


def candidate_ranks(k):
    """Candidate ranks 0 .. min(K - 1, max_rank(K)) as a list."""
    return list(range(0, min(k - 1, max_rank(k)) + 1))


def free_param_count(k, j):
    """Continuous free parameters P of the rank-j model in dimension k.

    The basis contributes j*k - j*(j+1)/2 angles, the factor norms j and
    sigma one more; the rank-0 model has the single parameter sigma.
    """
    k = int(k)
    j = int(j)
    if j < 0 or j > k:
        raise InvalidRank(f"rank {j} invalid for dimension {k}")
    if j == 0:
        return 1
    return j * k - (j * (j + 1)) // 2 + j + 1


def _check_candidate_rank(spec, j):
    cap = min(spec.k - 1, max_rank(spec.k))
    if not 1 <= j <= cap:
        raise InvalidRank(
            f"rank {j} outside candidate range 1..{cap} for K={spec.k}"
        )


def _check_distinct_eigenvalues(spec, j):
    """Reject ties within tolerance among delta_1..delta_{j+1}."""
    d = spec.eigenvalues
    tol = DISTINCT_RTOL * d[0]
    gaps = d[:j] - d[1 : j + 1]
    if gaps.size and float(gaps.min()) < tol:
        raise DegenerateSpectrum(
            f"eigenvalues tied within {DISTINCT_RTOL:g} * delta_1 among the "
            f"top {j + 1}; rank {j} is not defined"
        )


def _validate_alphas(alphas, sigma2, j, for_prior=False):
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (j,):
        raise InvalidParameter(f"expected {j} factor norms, got shape {alphas.shape}")
    if not np.isfinite(sigma2) or sigma2 <= 0:
        raise InvalidParameter(f"sigma2 must be positive, got {sigma2}")
    if j == 0:
        return alphas
    if not np.all(np.isfinite(alphas)) or np.any(alphas <= 0):
        raise InvalidParameter("factor norms must be positive and finite")
    if for_prior:
        if np.any(np.diff(alphas) > 0):
            raise InvalidParameter("factor norms must be sorted descending")
        sq = alphas**2
        tol = DISTINCT_RTOL * (sq[0] + sigma2)
        if j > 1 and float(np.min(sq[:-1] - sq[1:])) < tol:
            raise DegenerateSpectrum("tied factor norms; prior and Fisher are singular")
    return alphas


# ===== Elementary symmetric polynomials and the stationary-point polynomial =====


def esp(values):
    """Elementary symmetric polynomials e_0..e_m of the given values.

    Computed as the coefficient vector of prod_i (x + v_i) via
    divide-and-conquer convolution, which keeps round-off growth mild.
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1:
        raise InvalidParameter("esp expects a 1-d array")
    if vals.size == 0:
        return np.array([1.0])
    polys = [np.array([1.0, v]) for v in vals]
    while len(polys) > 1:
        merged = [
            np.convolve(polys[i], polys[i + 1]) for i in range(0, len(polys) - 1, 2)
        ]
        if len(polys) % 2:
            merged.append(polys[-1])
        polys = merged
    return polys[0]


def residual_polynomial_coefficients(retained, tau_ml, n, k):
    """Ascending coefficients a_0..a_{J+1} of the stationary-point polynomial.

    retained are the top-J sample eigenvalues, tau_ml the mean of the
    discarded ones.  Stationary points of the concentrated codelength in
    tau solve sum_i a_i tau^i = 0; the coefficients combine tau_ml with the
    elementary symmetric polynomials e_t of the retained eigenvalues:

        a_0     = -tau_ml * e_J
        a_i     = (-1)^(i+1) [ tau_ml e_{J-i}
                   + (1 - ((i-1)(J-1) + K(J-i+1)) / (N(K-J))) e_{J-i+1} ]
        a_{J+1} = (-1)^J [ 1 - J(J-1) / (N(K-J)) ]
    """
    retained = np.asarray(retained, dtype=float)
    j = retained.size
    n = int(n)
    k = int(k)
    if j < 1 or j > k - 1:
        raise InvalidRank(f"need 1 <= J <= K-1, got J={j}, K={k}")
    denom = n * (k - j)
    e = esp(retained)  # e[t] = e_t, t = 0..J
    coeffs = np.empty(j + 2)
    coeffs[0] = -tau_ml * e[j]
    for i in range(1, j + 1):
        c = 1.0 - ((i - 1) * (j - 1) + k * (j - i + 1)) / denom
        coeffs[i] = (-1.0) ** (i + 1) * (tau_ml * e[j - i] + c * e[j - i + 1])
    coeffs[j + 1] = (-1.0) ** j * (1.0 - (j * (j - 1)) / denom)
    return coeffs


def mml_polynomial(spec, j):
    """Build the stationary-point polynomial for rank j from a spectrum."""
    _check_candidate_rank(spec, j)
    _check_distinct_eigenvalues(spec, j)
    d = spec.eigenvalues
    if d[j - 1] <= 0:
        raise InvalidRank(f"delta_{j} is zero; spectrum cannot support rank {j}")
    tau_ml = float(d[j:].mean())
    if tau_ml <= 0:
        raise InvalidRank("discarded eigenvalues are all zero; residual undefined")
    coeffs = residual_polynomial_coefficients(d[:j], tau_ml, spec.n_samples, spec.k)
    return MmlPolynomial(rank=j, coefficients=coeffs, domain_upper=float(d[j - 1]))


# ===== Real root extraction =====


def _polish_real_roots(coeffs_desc, candidates):
    """A few Newton steps per candidate; keeps whatever improves the residual."""
    deriv = np.polyder(coeffs_desc)
    out = []
    for x in candidates:
        best = x
        best_res = abs(np.polyval(coeffs_desc, x))
        for _ in range(8):
            dp = np.polyval(deriv, x)
            if dp == 0.0 or not np.isfinite(dp):
                break
            step = np.polyval(coeffs_desc, x) / dp
            x = x - step
            res = abs(np.polyval(coeffs_desc, x))
            if res < best_res:
                best, best_res = x, res
            if abs(step) <= 1e-15 * max(1.0, abs(x)):
                break
        out.append(best)
    return out


def _quadratic_real_roots(a0, a1, a2):
    disc = a1 * a1 - 4.0 * a2 * a0
    if disc < 0.0:
        return []
    sq = math.sqrt(disc)
    if a1 == 0.0:
        r = sq / (2.0 * a2)
        return [-r, r]
    q = -(a1 + math.copysign(sq, a1)) / 2.0
    roots = [q / a2]
    if q != 0.0:
        roots.append(a0 / q)
    return roots


def _cubic_real_roots(a0, a1, a2, a3):
    # Depressed form t^3 + p t + q with x = t - a2 / (3 a3).
    shift = a2 / (3.0 * a3)
    p = a1 / a3 - (a2 / a3) ** 2 / 3.0
    q = (2.0 * (a2 / a3) ** 3 / 27.0) - (a2 / a3) * (a1 / a3) / 3.0 + a0 / a3
    disc = -4.0 * p**3 - 27.0 * q**2
    roots = []
    if abs(p) < 1e-300 and abs(q) < 1e-300:
        roots = [0.0]
    elif disc > 0.0:
        # Three real roots: trigonometric form.
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        arg = min(1.0, max(-1.0, arg))
        theta = math.acos(arg) / 3.0
        roots = [m * math.cos(theta - 2.0 * math.pi * i / 3.0) for i in range(3)]
    else:
        # One real root: Cardano with the cancellation-safe branch.
        s = math.sqrt(max(q * q / 4.0 + p**3 / 27.0, 0.0))
        w = -q / 2.0 - s if q >= 0.0 else -q / 2.0 + s
        u = math.copysign(abs(w) ** (1.0 / 3.0), w) if w != 0.0 else 0.0
        roots = [u - p / (3.0 * u)] if u != 0.0 else [0.0]
    return [t - shift for t in roots]


def find_real_roots(poly):
    """All real roots of an MmlPolynomial inside (0, domain_upper), ascending.

    Closed forms handle degree <= 3; higher degrees use companion-matrix
    eigenvalues.  Every candidate gets Newton polishing and must pass the
    residual bound |p(tau)| <= 1e-9 * max|a_i| * max(1, tau)^deg.
    """
    asc = np.asarray(poly.coefficients, dtype=float)
    scale = float(np.max(np.abs(asc)))
    if scale == 0.0:
        raise IllConditionedPolynomial("all polynomial coefficients are zero")
    if abs(asc[-1]) < _LEADING_RTOL * scale:
        raise IllConditionedPolynomial(
            f"leading coefficient {asc[-1]:g} is below {_LEADING_RTOL:g} of "
            f"the coefficient scale {scale:g}"
        )
    deg = asc.size - 1
    desc = asc[::-1]

    if deg == 1:
        candidates = [-asc[0] / asc[1]]
    elif deg == 2:
        candidates = _quadratic_real_roots(asc[0], asc[1], asc[2])
    elif deg == 3:
        candidates = _cubic_real_roots(asc[0], asc[1], asc[2], asc[3])
    else:
        monic = desc / desc[0]
        comp = np.zeros((deg, deg))
        comp[1:, :-1] = np.eye(deg - 1)
        comp[0, :] = -monic[1:]
        eigs = np.linalg.eigvals(comp)
        candidates = [
            float(z.real)
            for z in eigs
            if abs(z.imag) <= 1e-8 * max(1.0, abs(z.real))
        ]

    polished = _polish_real_roots(desc, candidates)

    accepted = []
    for r in polished:
        if not (0.0 < r < poly.domain_upper):
            continue
        bound = _RESIDUAL_RTOL * scale * max(1.0, abs(r)) ** deg
        if abs(np.polyval(desc, r)) > bound:
            continue
        accepted.append(r)

    accepted.sort()
    dedup = []
    tol = 1e-10 * max(poly.domain_upper, 1.0)
    for r in accepted:
        if not dedup or r - dedup[-1] > tol:
            dedup.append(r)
    return np.array(dedup)


# ===== Likelihood and codelength pieces =====


def negative_log_likelihood(spec, alphas, sigma2, j):
    """Negative log-likelihood of the rank-j model in the eigenbasis.

    With the basis fixed at the top-j eigenvectors the dense Gaussian
    expression collapses to sums over the sample eigenvalues:

        (NK/2) log 2pi + (N/2) [ sum_{i<=j} (log(alpha_i^2 + s2)
          + delta_i / (alpha_i^2 + s2)) + (K-j) log s2 + sum_{i>j} delta_i / s2 ]
    """
    j = int(j)
    if j < 0 or j > spec.k - 1:
        raise InvalidRank(f"need 0 <= j <= K-1, got j={j}, K={spec.k}")
    alphas = _validate_alphas(alphas, sigma2, j)
    n, k = spec.n_samples, spec.k
    d = spec.eigenvalues
    model_top = alphas**2 + sigma2
    tail = float(d[j:].sum())
    inner = (
        float(np.log(model_top).sum())
        + float((d[:j] / model_top).sum())
        + (k - j) * math.log(sigma2)
        + tail / sigma2
    )
    return 0.5 * n * k * math.log(2.0 * math.pi) + 0.5 * n * inner


def concentrated_codelength(spec, j, tau):
    """Codelength as a function of tau alone, up to a tau-free constant.

    Valid for 0 < tau < delta_j, with the factor norms concentrated out at
    alpha_i^2 = delta_i - tau.  Stationary points of this expression are
    exactly the roots of mml_polynomial; its value still decreases without
    bound as tau -> delta_j, so only stationary points are compared.
    """
    j = int(j)
    if j < 1 or j > spec.k - 1:
        raise InvalidRank(f"need 1 <= j <= K-1, got j={j}, K={spec.k}")
    d = spec.eigenvalues
    upper = float(d[j - 1])
    if not (0.0 < tau < upper):
        raise DomainError(f"tau={tau:g} outside (0, {upper:g})")
    n, k = spec.n_samples, spec.k
    retained = d[:j]
    return (
        0.5 * (n * (k - j) - k * j) * math.log(tau)
        + 0.5 * n * spec.trace / tau
        - 0.5 * n * float((retained - tau).sum()) / tau
        + 0.5 * (k - j + 1) * float(np.log(retained - tau).sum())
    )


def log_multivariate_gamma(j, y):
    """log Gamma_j(y) = (j(j-1)/4) log pi + sum_{i=1..j} log Gamma(y + (1-i)/2)."""
    j = int(j)
    if j < 1:
        raise InvalidParameter("order must be at least 1")
    if y + (1.0 - j) / 2.0 <= 0.0:
        raise DomainError(f"multivariate gamma undefined at order {j}, argument {y}")
    total = j * (j - 1) / 4.0 * math.log(math.pi)
    for i in range(1, j + 1):
        total += math.lgamma(y + (1.0 - i) / 2.0)
    return total


def _log_multivariate_beta(j, a, b):
    return (
        log_multivariate_gamma(j, a)
        + log_multivariate_gamma(j, b)
        - log_multivariate_gamma(j, a + b)
    )


def stiefel_log_volume(k, j):
    """Log volume of the manifold of orthonormal j-frames in R^k.

    Vol = 2^j pi^(kj/2) / Gamma_j(k/2).  The frame prior is uniform, so
    this volume normalises its density.
    """
    if j < 1:
        return 0.0
    return (
        j * math.log(2.0)
        + (k * j / 2.0) * math.log(math.pi)
        - log_multivariate_gamma(j, k / 2.0)
    )


_PRIOR_CONST_CACHE = {}


def _prior_constant(k, j):
    """Rank- and dimension-dependent constant of the factor-norm prior.

    The 2^j of the norm density cancels against the 2^j of the frame
    volume, leaving a ratio of multivariate gamma terms.
    """
    key = (k, j)
    if key not in _PRIOR_CONST_CACHE:
        _PRIOR_CONST_CACHE[key] = (
            j * math.log(2.0)
            + (j * j / 2.0) * math.log(math.pi)
            - log_multivariate_gamma(j, j / 2.0)
            - _log_multivariate_beta(j, k / 2.0, j / 2.0)
            + math.lgamma(j + 1)  # arbitrary labelling of the j factors
            - stiefel_log_volume(k, j)  # uniform frame prior is normalised
        )
    return _PRIOR_CONST_CACHE[key]


def log_prior(spec, alphas, sigma2, j):
    """Log prior density of (alpha, sigma) for the rank-j model.

    The residual scale carries the scale-free prior 1/sigma (normaliser
    omitted; it is rank-independent and cancels in comparisons).  For
    j >= 1 the factor norms carry the proper density

        2^j pi^(j^2/2) sigma^(j^2) / (Gamma_j(j/2) B_j(K/2, j/2))
          * prod_i alpha_i^(K-j) (sigma^2 + alpha_i^2)^(-(K+j)/2)
          * prod_{i<l} (alpha_i^2 - alpha_l^2)

    times j! for label exchange, and the factor directions carry the
    uniform distribution over orthonormal j-frames, contributing the
    constant -stiefel_log_volume(k, j).  The basis-angle Jacobian is
    omitted here and in log_fisher_det; the two omissions cancel in
    full_codelength.
    """
    j = int(j)
    alphas = _validate_alphas(alphas, sigma2, j, for_prior=True)
    value = -0.5 * math.log(sigma2)
    if j == 0:
        return value
    k = spec.k
    sq = alphas**2
    value += _prior_constant(k, j)
    value += (j * j / 2.0) * math.log(sigma2)
    value += float(((k - j) * np.log(alphas)).sum())
    value -= 0.5 * (k + j) * float(np.log(sigma2 + sq).sum())
    for i in range(j - 1):
        value += float(np.log(sq[i] - sq[i + 1 :]).sum())
    return value


def log_fisher_det(spec, alphas, sigma2, j):
    """Log determinant of the expected Fisher information of (alpha, sigma).

    Includes the N^P sample-size factor.  For j >= 1:

        P log N + (j+1) log 2 + log(K-j) - (j(K-j)+1) log sigma^2
          + sum_i [ (4(K-j)+2) log alpha_i - (K+1) log(alpha_i^2 + sigma^2) ]
          + 2 sum_{i<l} log(alpha_i^2 - alpha_l^2)

    At j = 0 this reduces to log(2NK / sigma^2), the information of the
    scale of an isotropic Gaussian.  The basis-angle Jacobian is omitted,
    matching log_prior.
    """
    j = int(j)
    alphas = _validate_alphas(alphas, sigma2, j, for_prior=True)
    n, k = spec.n_samples, spec.k
    p = free_param_count(k, j)
    value = (
        p * math.log(n)
        + (j + 1) * math.log(2.0)
        + math.log(k - j)
        - (j * (k - j) + 1) * math.log(sigma2)
    )
    if j == 0:
        return value
    sq = alphas**2
    value += float(((4.0 * (k - j) + 2.0) * np.log(alphas)).sum())
    value -= (k + 1) * float(np.log(sq + sigma2).sum())
    for i in range(j - 1):
        value += 2.0 * float(np.log(sq[i] - sq[i + 1 :]).sum())
    return value


def quantization_nats(p):
    """Quantization penalty (P/2) log kappa_P + P/2 in nats.

    Exact lattice constants cover P <= 3; beyond that the asymptotic form
    -(P/2) log 2pi + (1/2) log(P pi) - gamma tracks the optimal-lattice
    sequence to well under a tenth of a nat.
    """
    p = int(p)
    if p < 1:
        raise InvalidParameter("parameter count must be positive")
    if p <= 3:
        return 0.5 * p * math.log(_KAPPA[p]) + 0.5 * p
    return -0.5 * p * math.log(2.0 * math.pi) + 0.5 * math.log(p * math.pi) - _EULER_GAMMA


def full_codelength(spec, fit):
    """Complete two-part codelength of a fit, split into its four parts."""
    p = free_param_count(spec.k, fit.rank)
    nll = negative_log_likelihood(spec, fit.alphas, fit.sigma2, fit.rank)
    nlp = -log_prior(spec, fit.alphas, fit.sigma2, fit.rank)
    hlf = 0.5 * log_fisher_det(spec, fit.alphas, fit.sigma2, fit.rank)
    quant = quantization_nats(p)
    return CodelengthBreakdown(
        neg_log_likelihood=nll,
        neg_log_prior=nlp,
        half_log_fisher=hlf,
        quantization=quant,
        total=nll + nlp + hlf + quant,
        param_count=p,
    )


# ===== Estimators =====


def _isotropic_fit(spec, estimator):
    sigma2 = spec.trace / spec.k
    if sigma2 <= 0:
        raise InvalidRank("zero-variance data; no model is defined")
    return PcaFit(
        rank=0,
        alphas=np.empty(0),
        sigma2=sigma2,
        basis=np.empty((spec.k, 0)),
        estimator=estimator,
    )


def ml_estimate(spec, j):
    """Maximum-likelihood fit at rank j.

    sigma2 is the mean of the discarded eigenvalues and alpha_i^2 the
    excess delta_i - sigma2 of the retained ones; requires delta_j to
    exceed that mean, otherwise the rank is not supportable.
    """
    j = int(j)
    if j == 0:
        return _isotropic_fit(spec, "ml")
    _check_candidate_rank(spec, j)
    d = spec.eigenvalues
    sigma2 = float(d[j:].mean())
    if sigma2 <= 0:
        raise InvalidRank("discarded eigenvalues are all zero; residual undefined")
    if d[j - 1] <= sigma2:
        raise InvalidRank(
            f"delta_{j}={d[j - 1]:g} does not exceed the residual mean {sigma2:g}"
        )
    return PcaFit(
        rank=j,
        alphas=np.sqrt(d[:j] - sigma2),
        sigma2=sigma2,
        basis=spec.eigenvectors[:, :j].copy(),
        estimator="ml",
    )


def mml_estimate(spec, j):
    """Minimum-codelength fit at rank j >= 1.

    Finds the admissible stationary points of the concentrated codelength
    and keeps the one with the shortest codelength.  Raises NoValidRoot
    when no stationary point lies in (0, delta_j); callers fall back to
    the rank-0 model in that case.
    """
    j = int(j)
    if j < 1:
        raise InvalidRank("mml_estimate needs j >= 1; use rank 0 explicitly")
    poly = mml_polynomial(spec, j)
    roots = find_real_roots(poly)
    if roots.size == 0:
        raise NoValidRoot(
            f"no admissible residual-variance root in (0, {poly.domain_upper:g}) "
            f"for rank {j}",
        )
    values = [concentrated_codelength(spec, j, float(r)) for r in roots]
    sigma2 = float(roots[int(np.argmin(values))])
    d = spec.eigenvalues
    fit = PcaFit(
        rank=j,
        alphas=np.sqrt(d[:j] - sigma2),
        sigma2=sigma2,
        basis=spec.eigenvectors[:, :j].copy(),
        estimator="mml",
    )
    return replace(fit, codelength=full_codelength(spec, fit))


def _rank0_codelength(spec):
    fit = _isotropic_fit(spec, "mml")
    return replace(fit, codelength=full_codelength(spec, fit))


def _select_mml_with_fits(spec, candidates=None):
    scores = {}
    skipped = {}
    fits = {}
    if candidates is None:
        candidates = candidate_ranks(spec.k)
    for j in candidates:
        try:
            if j == 0:
                fit = _rank0_codelength(spec)
            else:
                fit = mml_estimate(spec, j)
        except (NoValidRoot, DegenerateSpectrum, InvalidRank, IllConditionedPolynomial) as exc:
            skipped[j] = f"{type(exc).__name__}: {exc}"
            continue
        scores[j] = fit.codelength.total
        fits[j] = fit
    if not scores:
        raise InvalidRank("no candidate rank could be scored")
    selected = min(scores, key=lambda jj: (scores[jj], jj))
    report = SelectionReport(
        criterion="mml", scores=scores, selected=selected, skipped=skipped
    )
    return report, fits


def select_rank_mml(spec, candidates=None):
    """Score every candidate rank by total codelength and pick the shortest.

    Candidates default to 0..max_rank(K); pass an explicit iterable to
    restrict the field (the simulation harness scores factor models only).
    Candidates that fail (no admissible root, tied eigenvalues, rank not
    supportable) are recorded in skipped rather than scored; ties in total
    codelength resolve to the smaller rank.
    """
    report, _ = _select_mml_with_fits(spec, candidates)
    return report
