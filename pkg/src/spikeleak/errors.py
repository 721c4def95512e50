"""Exception hierarchy shared by every spikeleak module."""


class SpikeLeakError(Exception):
    """Base class for all library errors."""


class DimensionError(SpikeLeakError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class UsageError(SpikeLeakError, ValueError):
    """An API was called with arguments outside its contract."""


class ValidationError(SpikeLeakError, ValueError):
    """Input data violates a documented value range or invariant."""


class FormatError(SpikeLeakError, ValueError):
    """A binary file or byte buffer is malformed.

    ``offset`` is the byte position at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ProtocolError(SpikeLeakError):
    """Federated messages disagree on the model they were produced for."""


class DivergedError(SpikeLeakError, ArithmeticError):
    """An attack objective became NaN or infinite."""
