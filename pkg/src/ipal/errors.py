"""Toolkit exception hierarchy.

Exit-code mapping for the CLI: UsageError -> 1, DataError -> 2, anything
else -> 3. Library code raises these directly; it never calls sys.exit.
"""


class IpalError(Exception):
    """Base class for all toolkit errors."""


class UsageError(IpalError):
    """Bad invocation: unknown option, conflicting flags, missing file."""


class DataError(IpalError):
    """Malformed or contract-violating input data."""


class ValidationError(DataError):
    """A record violates a named format invariant."""

    def __init__(self, rule: str, detail: str = ""):
        self.rule = rule
        self.detail = detail
        super().__init__(f"{rule}: {detail}" if detail else rule)
