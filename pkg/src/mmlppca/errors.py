"""Exception taxonomy shared by every module in the package.

Two broad families matter to callers: input problems (bad data, bad
configuration) and model-domain problems (a quantity left the region where
the estimators are defined).  The CLI maps the first family to exit code 2
and the second to exit code 3.
"""

__all__ = [
    "MmlPcaError",
    "InvalidData",
    "InvalidParameter",
    "InvalidRank",
    "DegenerateSpectrum",
    "NoValidRoot",
    "IllConditionedPolynomial",
    "NumericalFailure",
    "DomainError",
]


class MmlPcaError(Exception):
    """Base class for every error raised by this package."""


class InvalidData(MmlPcaError):
    """Input data matrix is unusable: wrong shape, non-finite entries, or unparseable."""


class InvalidParameter(MmlPcaError):
    """A parameter value is outside its legal range (e.g. sigma2 <= 0)."""


class InvalidRank(MmlPcaError):
    """Requested number of components is impossible for the given spectrum."""


class DegenerateSpectrum(MmlPcaError):
    """Eigenvalues needed distinct are tied within tolerance; the candidate is undefined."""


class NoValidRoot(MmlPcaError):
    """The residual-variance polynomial has no admissible root in (0, delta_J)."""

    def __init__(self, message, roots_found=()):
        super().__init__(message)
        self.roots_found = tuple(float(r) for r in roots_found)


class IllConditionedPolynomial(MmlPcaError):
    """Polynomial coefficients are too ill-scaled for reliable root finding."""


class NumericalFailure(MmlPcaError):
    """A numerical routine (eigendecomposition, root polish) failed to converge."""


class DomainError(MmlPcaError):
    """A derived quantity left its mathematical domain (e.g. log of a non-positive value)."""
