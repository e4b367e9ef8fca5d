"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called on data that violates its preconditions."""


class PreconditionError(ContractError):
    """Input data is well-formed but outside the regime an estimate is valid in."""


class SolverFault(RuntimeError):
    """Non-finite values appeared during time integration.

    Carries the last state that passed the finiteness check so callers can
    flush partial output.
    """

    def __init__(self, message, last_good_state=None, t=None):
        super().__init__(message)
        self.last_good_state = last_good_state
        self.t = t
