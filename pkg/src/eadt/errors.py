"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for errors raised by the library layer."""


# shape / count mismatches
class ShapeMismatch(ToolkitError):
    pass


class CountMismatch(ToolkitError):
    pass


class ClassCountMismatch(ToolkitError):
    pass


class WeightCountMismatch(ToolkitError):
    pass


class MixedImageIds(ToolkitError):
    pass


# empty inputs
class EmptyEnsemble(ToolkitError):
    pass


class EmptyDataset(ToolkitError):
    pass


class EmptyGrid(ToolkitError):
    pass


# augmentation preconditions
class NoPositivePixels(ToolkitError):
    pass


class CropLargerThanImage(ToolkitError):
    pass


class BatchTooSmall(ToolkitError):
    pass


# file formats
class FormatError(ToolkitError):
    """Base class for on-disk format violations."""


class MalformedHeader(FormatError):
    pass


class TruncatedData(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class InvalidTensorData(FormatError):
    pass


class InvalidBox(FormatError):
    pass


class ConfigError(ToolkitError):
    """Raised when a run configuration file is unusable."""
