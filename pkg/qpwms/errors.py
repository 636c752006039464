from typing import Optional, Sequence


class ConfigurationError(ValueError):
    """Invalid simulation parameters.

    Attributes
    ----------
    violations
        Human-readable violations, each prefixed by the dotted field path of
        the offending parameter when known.
    """

    def __init__(self, message: str, violations: Sequence[str] = ()):
        super().__init__(message)
        self.violations = list(violations) or [message]


class ScenarioParseError(ConfigurationError):
    """Scenario file that cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None,
                 column: Optional[int] = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class NumericalError(ArithmeticError):
    pass


class UnusableSlotError(NumericalError):
    """A slot whose 1f magnitude vanishes, so it cannot be 1f-normalized."""

    def __init__(self, slots: Sequence[int]):
        slots = list(slots)
        head = ", ".join(str(slot) for slot in slots[:8])
        more = "" if len(slots) <= 8 else f" (+{len(slots) - 8} more)"
        super().__init__(f"vanishing 1f magnitude in slot(s) {head}{more}")
        self.slots = slots


class FixedPointOverflowError(NumericalError):
    pass
