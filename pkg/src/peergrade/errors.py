"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`PeergradeError` so callers
(and the CLI) can distinguish domain errors from bugs.
"""


class PeergradeError(Exception):
    """Base class for all domain errors."""


class DataError(PeergradeError):
    """Invalid dataset contents: schema violations, dangling ids, duplicates."""


class InvalidExerciseError(DataError):
    """Exercise metadata unusable for the requested operation (e.g. zero maximum)."""


class DegenerateExerciseError(DataError):
    """Exercise statistics are degenerate (e.g. zero grade variance)."""


class MetricError(PeergradeError):
    """Metric preconditions violated (key mismatch, too few entries, zero variance)."""


class EstimatorError(PeergradeError):
    """Estimator preconditions violated (ungraded submissions, missing exams, ...)."""


class InfeasibleAssignmentError(PeergradeError):
    """Requested grading load cannot be met by the available graders."""
