"""Exception hierarchy shared by every subsystem."""


class ScadaSimError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(ScadaSimError, ValueError):
    """A caller broke a documented precondition (dimensions, ranges, ordering)."""


class NumericOverflowError(ScadaSimError, ArithmeticError):
    """A simulated quantity became NaN or infinite."""


class DivergenceError(ScadaSimError, ArithmeticError):
    """An iterative solver hit its iteration cap without converging."""


class InsufficientDataError(ScadaSimError, ValueError):
    pass


class IdentificationError(ScadaSimError, ArithmeticError):
    """System identification could not produce a usable model."""


class UndefinedMetricError(ScadaSimError, ValueError):
    pass


class RoundAborted(ScadaSimError):
    """A scenario round failed; carries the round index and a diagnostic."""

    def __init__(self, round_index: int, diagnostic: str):
        super().__init__(f"round {round_index} aborted: {diagnostic}")
        self.round_index = round_index
        self.diagnostic = diagnostic
