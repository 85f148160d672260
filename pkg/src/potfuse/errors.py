"""Exception types shared across the pipeline."""


class PotfuseError(Exception):
    """Base class for pipeline failures."""


class FormatError(PotfuseError):
    """A store/model/manifest file is malformed, truncated, or has a bad magic."""


class DimensionError(PotfuseError):
    """An array's shape does not match the expected contract."""


class FusionError(DimensionError):
    """A per-backbone vector is missing or has the wrong length."""


class ExtractionError(PotfuseError):
    """A backbone rejected an input or produced an invalid output."""


class DegenerateRangeError(PotfuseError):
    """Min-max rescaling requested with xmax <= xmin."""


class DegenerateDataError(PotfuseError):
    """An embedding was requested for data with no variance."""


class UndefinedMetricError(PotfuseError):
    """The metric is undefined for the given inputs (e.g. single-class AUC)."""
