"""Exception hierarchy.

Split by CLI exit-code contract: usage problems map to exit 1, data problems
(unreadable images, bad manifests, degenerate datasets) to exit 2, and model
file-format problems to exit 3.
"""


class SynthsieveError(Exception):
    """Base class for all library errors."""


class ShapeError(SynthsieveError):
    """Tensor shapes disagree; message names the offending dimensions."""


class DataError(SynthsieveError):
    """Bad input data: unreadable image, empty manifest, degenerate dataset."""


class ModelFormatError(SynthsieveError):
    """Base class for model-file problems."""


class BadMagicError(ModelFormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(ModelFormatError):
    """File format version is not supported by this build."""


class TruncatedFileError(ModelFormatError):
    """File ended before all declared payload bytes were read."""


class ChecksumError(ModelFormatError):
    """Trailing CRC32 does not match the file contents."""


class WeightShapeError(ModelFormatError):
    """Stored weight block does not match the shape implied by the layer spec."""


class GradientError(SynthsieveError):
    """Non-finite gradient encountered; message names the offending tensor."""
