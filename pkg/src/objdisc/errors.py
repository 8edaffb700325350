"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class InvariantError(RuntimeError):
    """An internal consistency check failed; signals a bug, not bad input."""
