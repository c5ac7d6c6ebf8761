"""Exception hierarchy shared by all pixelmeta modules."""


class PixelMetaError(Exception):
    """Base class for every error raised by this package."""


class TensorFormatError(PixelMetaError):
    """Malformed tensor file. Carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ValidationError(PixelMetaError):
    """Manifest or record violates a documented invariant."""


class ConfigError(PixelMetaError):
    """Degenerate or contradictory configuration."""


class ShapeError(PixelMetaError):
    """Array arguments disagree on dimensions."""


class SamplingError(PixelMetaError):
    """Not enough eligible classes, samples, or pixels to draw from."""


class NumericError(PixelMetaError):
    """Zero-norm vector or other value outside the numeric domain."""


class MissingPrototypeError(PixelMetaError):
    """A query pixel's label has no prototype in the support set."""


class MetricError(PixelMetaError):
    """Metric is undefined for the accumulated counts."""
