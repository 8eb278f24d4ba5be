"""Exception types shared across the package."""


class DataError(Exception):
    """Invalid dataset content or a violated data contract."""


class ParseError(DataError):
    """Unparsable input file; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class NumericalError(Exception):
    """A computation produced non-finite values or lost conditioning."""


class UsageError(Exception):
    """Bad command-line or configuration input."""
