"""Exception hierarchy shared across the package."""


class TensorPoolError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(TensorPoolError, ValueError):
    """An argument violates an operation's contract (shape, range, parity)."""

    def __init__(self, message, nearest_eta=None):
        super().__init__(message)
        # populated by the odd-order shrinkage path, which only accepts
        # powers of three and suggests the closest legal exponent
        self.nearest_eta = nearest_eta


class CapacityError(TensorPoolError, ValueError):
    """Input exceeds the desk-scale size bounds this library guarantees."""


class DomainError(TensorPoolError, ValueError):
    """A numeric value is outside the mathematical domain of an operation."""


class NormalizationError(TensorPoolError, ValueError):
    """A vector that must be normalized has zero (or non-finite) norm."""


class FileFormatError(TensorPoolError, ValueError):
    """A serialized tensor file is malformed.

    ``byte_offset`` points at the first offending byte so parse failures
    can be reported precisely.
    """

    def __init__(self, message, byte_offset):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset
