"""Exception types shared across the toolkit."""


class ContractError(ValueError):
    """An argument violates a documented precondition (shape, length, range)."""


class DomainError(ContractError):
    """A numeric argument lies outside a function's domain."""


class InputError(ValueError):
    """A file on disk is missing or malformed; ``location`` names where."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, last_good=None):
        self.last_good = last_good
        super().__init__(message)
