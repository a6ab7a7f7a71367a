"""Shared exception types."""


class DataError(Exception):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class UsageError(Exception):
    """Bad command-line usage (CLI exit code 1)."""
