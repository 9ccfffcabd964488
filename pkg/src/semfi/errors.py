"""Exception hierarchy shared across the package.

CLI exit codes: ConfigurationError family maps to 2, DataError family to 3,
anything else to 1.
"""


class SemfiError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SemfiError):
    """Invalid configuration: bad dimensions, ranks, schedules, expert sets."""


class ShapeError(SemfiError):
    """Tensor shapes incompatible with the requested operation."""


class RangeError(SemfiError):
    """Scalar argument outside its valid range (e.g. diffusion timestep)."""


class BatchingError(SemfiError):
    """Batch composition violates a precondition (mixed frame counts)."""


class DataError(SemfiError):
    """Problems with datasets, manifests, or clip files."""


class FormatError(DataError):
    """A binary container (clip or checkpoint) failed to parse."""


class DegenerateFeatureError(SemfiError):
    """A feature vector is all-zero where a direction is required."""


class StatisticsError(SemfiError):
    """Not enough samples to fit the statistics a metric needs."""


class PairingError(SemfiError):
    """Two sequences that must be compared element-wise differ in length."""


class CaptionerError(SemfiError):
    """The configured captioner failed to produce a caption."""


class PredictorNotConfigured(SemfiError):
    """Metric requires an external pretrained predictor that is not set up."""


class InsufficientDataError(SemfiError):
    """An aggregate (e.g. cross-scale variance) needs more rows than given."""
