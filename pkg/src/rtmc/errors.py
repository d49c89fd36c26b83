"""Exception types shared across the package."""


class ModelError(ValueError):
    """Instance data is malformed beyond what a ValidationReport can carry."""


class ImpossibleEvidenceError(ValueError):
    """A Bayes update conditioned on an event of probability zero."""


class MissingEntryError(KeyError):
    """A policy table was queried at an argument it does not cover."""


class BudgetExceededError(RuntimeError):
    """An enumeration or evaluation would exceed the configured budget."""

    def __init__(self, message: str, count=None):
        super().__init__(message)
        self.count = count
