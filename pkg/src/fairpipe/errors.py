"""Exception types raised across fairpipe."""


class FairPipeError(ValueError):
    """Base class for every domain error raised by this package."""


class InvalidSpecification(FairPipeError):
    pass


class DomainViolation(FairPipeError):
    pass


class EmptyPopulation(FairPipeError):
    pass


class UndefinedConditional(FairPipeError):
    """A conditional probability was requested on a zero-mass event."""


class UndefinedRatio(FairPipeError):
    pass


class InfeasibleSlack(FairPipeError):
    """The majority true-positive rate is zero, so no slack exists."""


class InfeasibleEpsilon(FairPipeError):
    def __init__(self, group, eps, majority_rate):
        self.group = group
        self.eps = eps
        self.majority_rate = majority_rate
        super().__init__(
            f"group {group!r}: (1+eps)*TPR_majority = (1+{eps})*{majority_rate} "
            f"lies outside [0, 1]"
        )


class InfeasibleScenario(FairPipeError):
    def __init__(self, constraint: str):
        self.constraint = constraint
        super().__init__(f"infeasible scenario: {constraint}")


class InvalidRule(FairPipeError):
    pass


class Divergence(FairPipeError):
    def __init__(self, message: str, last_state: float):
        self.last_state = last_state
        super().__init__(f"{message} (last valid state r={last_state!r})")


class NotAFixedPoint(FairPipeError):
    pass


class FormatError(FairPipeError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
