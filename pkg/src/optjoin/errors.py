"""Exception hierarchy shared by every module."""


class OptJoinError(Exception):
    """Base class for errors raised by optjoin."""


class InputError(OptJoinError, ValueError):
    """A precondition on user-supplied data or parameters is violated."""


class BudgetExceeded(OptJoinError):
    """A computation would exceed its configured atom/entry budget."""


class SolverError(OptJoinError):
    """A numerical solver failed to produce a valid answer."""
