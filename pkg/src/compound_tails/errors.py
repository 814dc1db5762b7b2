"""Exception hierarchy shared by every module."""


class CompoundTailsError(Exception):
    """Base class for all package errors."""


class DomainError(CompoundTailsError, ValueError):
    """A parameter or argument lies outside the valid range."""


class ContractError(CompoundTailsError, ValueError):
    """Inputs violate an operation's preconditions (mismatched grids, wrong engine...)."""


class NumericError(CompoundTailsError, ArithmeticError):
    """A numerical procedure could not reach its declared tolerance.

    ``achieved`` carries the tolerance actually reached when known, and
    ``largest_usable_x`` the last grid point before underflow when relevant.
    """

    def __init__(self, message, achieved=None, largest_usable_x=None):
        super().__init__(message)
        self.achieved = achieved
        self.largest_usable_x = largest_usable_x


class ResourceError(CompoundTailsError, MemoryError):
    """The requested computation would exceed the configured memory budget."""
