"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(ValueError):
    """A model hypothesis required by an operation does not hold.

    ``threshold`` carries the computed boundary value when one exists, so that
    callers (the CLI in particular) can report it.
    """

    def __init__(self, message, threshold=None):
        super().__init__(message)
        self.threshold = threshold


class RootNotFoundError(ArithmeticError):
    def __init__(self, message, supremum=None):
        super().__init__(message)
        self.supremum = supremum
