"""Exception types shared across the package."""


class UnrecoverableErasure(Exception):
    """Too few unerased symbols to determine a Reed-Solomon codeword."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class DecodingError(Exception):
    """A decoder produced or detected an inconsistent result."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class ConstructionError(Exception):
    """A code construction could not meet its target within configured limits."""


class CapacityLimitError(Exception):
    """A requested construction exceeds a configured resource limit."""
