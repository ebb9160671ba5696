"""Exception hierarchy shared by all karyogate modules.

The CLI maps these onto its exit codes, so new error types should subclass
one of the categories below rather than raising bare ValueError.
"""


class KaryogateError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(KaryogateError):
    """Caller handed us data that violates an operation's preconditions."""


class InvalidConfigError(KaryogateError):
    """Configuration values outside their allowed sets."""


class ParseError(KaryogateError):
    """A persisted artifact (scores, manifest, model bundle) failed to parse."""


class InternalError(KaryogateError):
    """An internal consistency invariant was violated; indicates a bug."""


class NoBoundaryError(InvalidInputError):
    """A mask had too few occupied rows to trace a boundary."""


class DegenerateGeometryError(InvalidInputError):
    """Geometry too degenerate for a fit (e.g. all middle points in one row)."""


class FeatureUnavailableError(InvalidInputError):
    """A feature cannot be computed because a prerequisite is missing."""


class MetricArityError(InvalidInputError):
    """A reliability metric was applied to a score vector with too few labels."""
