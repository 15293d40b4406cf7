"""Exception types raised by the padstream pipeline.

Everything inherits from PadstreamError so callers (and the CLI) can catch
pipeline failures without swallowing genuine bugs.
"""


class PadstreamError(Exception):
    """Base class for all padstream errors."""


class ConfigError(PadstreamError):
    """Bad, unknown, or out-of-range configuration value."""


class MissingArtifact(PadstreamError):
    """A required dataset, run directory, or checkpoint does not exist."""


class IOFailure(PadstreamError):
    """Reading or writing a dataset/tensor/checkpoint file failed."""


class DataError(PadstreamError):
    """Base class for malformed input data."""


class LengthMismatch(DataError):
    """Paired sequences (e.g. point lists) have different lengths."""


class ShapeMismatch(DataError):
    """Two arrays that must share a shape do not."""


class DegenerateAnchors(DataError):
    """Anchor correspondences do not determine a projective transform."""


class SingularTransform(DataError):
    """Transform matrix is not invertible (or numerically singular)."""


class TooFewFrames(DataError):
    """Clip has fewer frames than the operation requires."""


class EmptyBox(DataError):
    """Computed crop box has zero area."""


class BadSpatialSize(DataError):
    """Input spatial size is incompatible with the network's stride stack."""


class WrongLevelCount(DataError):
    """A feature pyramid does not have the expected number of levels."""


class WrongChannelCount(DataError):
    """Channel count is not what the operation requires."""


class InconsistentShapes(DataError):
    """Members of a collection disagree on shape where they must not."""


class EmptyDataset(DataError):
    """No clips were provided where at least one is required."""


class MissingClass(DataError):
    """Evaluation set lacks live or attack samples (or is empty)."""


class SingleClassDataset(DataError):
    """Training set contains only one of the two decision classes."""
