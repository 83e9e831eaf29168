"""Exception hierarchy shared across the library.

Everything raised on purpose by a public operation derives from
:class:`VoxalignError`, so callers can trap library failures without
swallowing genuine programming errors.
"""


class VoxalignError(Exception):
    """Base class for all library errors."""


class ShapeMismatch(VoxalignError):
    """Operands have incompatible dimensions."""


class DegenerateInput(VoxalignError):
    """Input is structurally valid but unusable (constant rows, zero vectors, ...)."""


class NumericalFailure(VoxalignError):
    """A numerical routine failed (non-PD factorization, non-finite values, ...)."""


class FormatError(VoxalignError):
    """A serialized artifact is malformed.

    The byte position at which parsing failed is kept on ``offset``.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class RangeError(VoxalignError):
    """A requested layer range falls outside the available layer ids."""


class InvalidState(VoxalignError):
    """An operation was called on an object missing required internal state."""


class UsageError(VoxalignError):
    """Invalid command-line usage or configuration."""
