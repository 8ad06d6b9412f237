"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violates a documented precondition (shape, range, ...)."""


class NumericError(FloatingPointError):
    """A non-finite value appeared during evaluation.

    ``where`` names the loss term or point responsible when known.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class LineSearchError(RuntimeError):
    """No admissible step length was found along the search direction."""


class PhaseAborted(RuntimeError):
    """An optimizer phase gave up; ``record`` holds the partial run."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
