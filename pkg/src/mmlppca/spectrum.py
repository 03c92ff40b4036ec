"""Sample spectra: data ingestion, centering, covariance, eigendecomposition.

Everything downstream (codelengths, information criteria, simulation
metrics) is a function of the eigenvalues and eigenvectors of the sample
covariance together with the sample count, so that triple is packaged as
an immutable Spectrum and passed around as the sufficient statistic.
"""

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidData, NumericalFailure

__all__ = [
    "Spectrum",
    "as_data_matrix",
    "load_csv",
    "center_columns",
    "sample_covariance",
    "eigen_descending",
    "spectrum_from_data",
    "max_rank",
]

# Relative tolerance for clamping tiny negative eigenvalues produced by
# round-off in eigh; anything more negative is treated as a hard failure.
_EIG_CLAMP_RTOL = 1e-12


def as_data_matrix(values):
    """Validate and return a float64 data matrix with N >= 2 rows, K >= 2 columns."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise InvalidData(f"data must be a 2-d array, got ndim={arr.ndim}")
    n, k = arr.shape
    if n < 2 or k < 2:
        raise InvalidData(f"data must have at least 2 rows and 2 columns, got {n}x{k}")
    if not np.all(np.isfinite(arr)):
        raise InvalidData("data contains non-finite entries")
    return arr


def load_csv(path_or_text):
    """Read a numeric CSV into a data matrix.

    Accepts a file path or raw CSV text.  A single header row is detected
    automatically: if any token on the first line does not parse as a
    float, the line is dropped.  Rows must all have the same width.
    """
    if isinstance(path_or_text, (str, bytes)) and "\n" in str(path_or_text):
        text = str(path_or_text)
    else:
        try:
            with open(path_or_text, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InvalidData(f"cannot read CSV: {exc}") from exc

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidData("CSV input is empty")

    def _numeric(line):
        try:
            [float(tok) for tok in line.split(",")]
            return True
        except ValueError:
            return False

    if not _numeric(lines[0]):
        lines = lines[1:]
        if not lines:
            raise InvalidData("CSV contains only a header row")

    try:
        arr = np.loadtxt(io.StringIO("\n".join(lines)), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise InvalidData(f"CSV parse failure: {exc}") from exc
    return as_data_matrix(arr)


def center_columns(data):
    """Subtract the column means; returns a new matrix with exact zero column sums."""
    arr = as_data_matrix(data)
    return arr - arr.mean(axis=0)


def sample_covariance(data):
    """Sample covariance S = X'X / N of centered data (divisor N, not N-1)."""
    arr = as_data_matrix(data)
    n = arr.shape[0]
    return (arr.T @ arr) / n


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition of a sample covariance plus the sample count.

    eigenvalues are sorted descending and non-negative; eigenvectors[:, j]
    is the unit eigenvector for eigenvalues[j], with the sign fixed so the
    largest-magnitude component is positive.
    """

    n_samples: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        self.eigenvalues.flags.writeable = False
        self.eigenvectors.flags.writeable = False

    @property
    def k(self):
        return self.eigenvalues.shape[0]

    @property
    def trace(self):
        return float(self.eigenvalues.sum())

    @classmethod
    def from_eigenvalues(cls, eigenvalues, n_samples):
        """Build a spectrum from known eigenvalues with the identity eigenbasis."""
        vals = np.sort(np.asarray(eigenvalues, dtype=float))[::-1].copy()
        if vals.ndim != 1 or vals.shape[0] < 2:
            raise InvalidData("need a 1-d array of at least 2 eigenvalues")
        if not np.all(np.isfinite(vals)) or vals[-1] < 0:
            raise InvalidData("eigenvalues must be finite and non-negative")
        if int(n_samples) < 2:
            raise InvalidData("n_samples must be at least 2")
        return cls(int(n_samples), vals, np.eye(vals.shape[0]))


def eigen_descending(cov, n_samples):
    """Eigendecompose a symmetric covariance into a Spectrum.

    Tiny negative eigenvalues (round-off from eigh) are clamped to zero;
    negative values beyond the clamp tolerance raise NumericalFailure.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidData(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise InvalidData("covariance contains non-finite entries")
    scale = float(np.max(np.abs(cov))) or 1.0
    if float(np.max(np.abs(cov - cov.T))) > 1e-8 * scale:
        raise InvalidData("covariance is not symmetric")

    try:
        vals, vecs = np.linalg.eigh((cov + cov.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc

    order = np.argsort(vals)[::-1]
    vals = vals[order].copy()
    vecs = vecs[:, order].copy()

    top = max(vals[0], 0.0)
    if vals[-1] < -_EIG_CLAMP_RTOL * max(top, 1.0):
        raise NumericalFailure(
            f"covariance has a significantly negative eigenvalue: {vals[-1]:g}"
        )
    np.clip(vals, 0.0, None, out=vals)

    # Deterministic sign: largest-magnitude component of each column positive.
    for j in range(vecs.shape[1]):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]

    if int(n_samples) < 2:
        raise InvalidData("n_samples must be at least 2")
    return Spectrum(int(n_samples), vals, vecs)


def spectrum_from_data(data):
    """Center, form the 1/N covariance, and eigendecompose in one step."""
    centered = center_columns(data)
    return eigen_descending(sample_covariance(centered), centered.shape[0])


def max_rank(k):
    """Largest identifiable component count for dimension k.

    This is the integer part of k + (1 - sqrt(8k + 1))/2, the classical
    bound on the number of factors a k-dimensional covariance can support.
    Computed with an integer fix-up so perfect squares do not suffer from
    floating-point edge cases.
    """
    k = int(k)
    if k < 2:
        raise InvalidData("dimension must be at least 2")
    j = int((2 * k + 1 - math.sqrt(8 * k + 1)) / 2)
    j = max(j, 0)
    # j satisfies the bound iff (2k + 1 - 2j)^2 >= 8k + 1.
    while (2 * k + 1 - 2 * (j + 1)) ** 2 >= 8 * k + 1 and (2 * k + 1 - 2 * (j + 1)) > 0:
        j += 1
    while j > 0 and (2 * k + 1 - 2 * j) ** 2 < 8 * k + 1:
        j -= 1
    return j
