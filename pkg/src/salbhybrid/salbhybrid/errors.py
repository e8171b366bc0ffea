class SalbError(Exception):
    """Base class for every error raised by the solver."""


class InstanceError(SalbError, ValueError):
    "Raised when an instance file is malformed or an instance violates its invariants."

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InfeasibleError(SalbError):
    "Raised when a stage proves that no assignment exists."

    def __init__(self, message, stage):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class BudgetExceeded(SalbError):
    "Raised when an exhaustive search runs out of its node or time budget."
    pass


class LpError(SalbError):
    "Raised for malformed LP input (unknown columns, bad bounds) and unbounded LPs."
    pass


class LpNumericalError(LpError):
    "Raised when the basis cannot be refactorized even after a retry."
    pass
