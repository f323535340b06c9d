"""Exception hierarchy shared by every stage of the pipeline."""


class DeDCGANError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(DeDCGANError, ValueError):
    pass


class NonFinite(DeDCGANError, FloatingPointError):
    """An operation produced NaN or Inf."""


class NotScalar(DeDCGANError, ValueError):
    pass


class MissingGrad(DeDCGANError, RuntimeError):
    pass


class UnknownKind(DeDCGANError, ValueError):
    pass


class NyquistViolation(DeDCGANError, ValueError):
    pass


class WindowTooLong(DeDCGANError, ValueError):
    pass


class BadScale(DeDCGANError, ValueError):
    pass


class BadNorm(DeDCGANError, ValueError):
    pass


class OffsetShapeMismatch(ShapeMismatch):
    pass


class DegenerateBatch(DeDCGANError, ValueError):
    pass


class Divergence(DeDCGANError, RuntimeError):
    pass


class EmptyDataset(DeDCGANError, ValueError):
    pass


class CheckpointMismatch(DeDCGANError, ValueError):
    pass


class UnknownLayer(DeDCGANError, KeyError):
    pass


class FormatError(DeDCGANError, ValueError):
    """A binary container or manifest failed validation."""
