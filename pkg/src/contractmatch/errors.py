"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class ContractMatchError(Exception):
    """Base class for all errors raised by contractmatch."""


class ValidationError(ContractMatchError, ValueError):
    """Invalid input data; ``path`` names the offending field (e.g. ``buys[1].fail_prob``)."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class EnumerationLimitError(ContractMatchError):
    """Raised when an exhaustive enumeration would exceed its configured guard."""


class SolverError(ContractMatchError, RuntimeError):
    """An LP came back infeasible/unbounded where that cannot happen, or the solver broke down."""
