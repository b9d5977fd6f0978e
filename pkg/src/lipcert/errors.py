"""Exception taxonomy shared across the package.

Every package-specific error derives from :class:`CertifyError` so callers can
catch one base class at API boundaries.  The CLI maps uncaught
:class:`CertifyError` instances to its internal-error exit code.
"""


class CertifyError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(CertifyError):
    """Array shapes or declared dimensions are inconsistent."""


class DimensionTooHigh(CertifyError):
    """The ambient dimension exceeds what exact vertex enumeration supports."""


class DuplicatePoint(CertifyError):
    """Two points coincide within the deduplication tolerance."""


class NoVertices(CertifyError):
    """A vertex query was made against a cell with no stored vertices."""


class InternalGeometry(CertifyError):
    """A geometric computation reached a state that should be impossible."""


class PointOutsideDomain(CertifyError):
    """A point expected to lie inside the box domain does not."""


class NonPositiveLipschitz(CertifyError):
    """A Lipschitz constant that must be strictly positive is not."""


class ViolationPresent(CertifyError):
    """A certified-coverage query was made while counter-examples exist."""


class AllCovered(CertifyError):
    """Vertex selection was requested but every cell is already covered."""


class EvaluationFailure(CertifyError):
    """The black-box evaluator raised or returned a non-finite value."""


class IndexOutOfRange(CertifyError, IndexError):
    """A feature or point index is outside the valid range."""


class UnsupportedActivation(CertifyError):
    """An activation name not known to the package was requested."""


class OutOfDomain(CertifyError):
    """An evaluation point lies outside the domain of a closed-form solution."""


class MalformedCSV(CertifyError):
    """A CSV file is missing a header, ragged, or too small to split."""


class NonNumeric(CertifyError):
    """A CSV cell could not be parsed as a finite number."""


class ConstantColumn(CertifyError):
    """A feature column is constant and cannot be min-max scaled."""


class NoEligibleCheckpoint(UserWarning):
    """No epoch reached zero training penalty; the last model is returned."""
