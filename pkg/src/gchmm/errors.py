"""Exception types shared across the package."""


class ProximityFormatError(ValueError):
    """A proximity CSV row could not be parsed or violates the format.

    Carries the 1-based line number of the offending row.
    """

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ProbabilityOverflowError(ValueError):
    """The summed departure probability out of a state exceeds one."""


class DegenerateWeightsError(ArithmeticError):
    """Every candidate value of a Gibbs update carries zero probability."""


class ImpossibleEventError(ValueError):
    """An observed transition cannot be attributed to any active event."""


class TractabilityError(ValueError):
    """The instance is too large for exhaustive enumeration."""


class UndefinedCurveError(ValueError):
    """ROC analysis was requested for labels containing a single class."""
