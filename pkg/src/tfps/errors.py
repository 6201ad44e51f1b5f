"""Exception types shared across modules and mapped to CLI exit codes."""


class DataError(ValueError):
    """Bad input data: parse failures, NaN cells, undersized splits (exit 2)."""


class NumericError(RuntimeError):
    """Numeric failure during optimization, e.g. NaN/inf loss (exit 3)."""
