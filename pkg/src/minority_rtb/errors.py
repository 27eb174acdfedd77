"""Exception hierarchy shared by all modules."""


class MinorityRTBError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MinorityRTBError, ValueError):
    """Invalid configuration; ``field`` names the offending parameter."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ContractError(MinorityRTBError, ValueError):
    """A precondition of an operation was violated."""


class SchemaError(MinorityRTBError, ValueError):
    """Input file does not carry the expected columns."""


class RowError(MinorityRTBError, ValueError):
    """A data row failed validation.

    ``row`` is the 1-based line number in the source file (header is line 1).
    """

    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class DegenerateInputError(MinorityRTBError, ValueError):
    """Input is structurally valid but cannot support the computation."""


class EvaluationError(MinorityRTBError, ArithmeticError):
    """A user-supplied function failed or returned a non-finite value."""

    def __init__(self, point, message):
        self.point = point
        super().__init__(f"at {point!r}: {message}")
