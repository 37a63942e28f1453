"""Exception types shared across the package.

Invalid arguments raise plain :class:`ValueError`; the classes below cover
the two failure modes callers usually want to tell apart.
"""


class FormatError(ValueError):
    """A binary file did not match the format its reader expects."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SolverError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message}: residual {residual:.3e}")
        self.residual = residual
