"""Semantic exception hierarchy shared across the package."""


class QclabError(Exception):
    """Base class for all errors raised by qclab."""


class ParseError(QclabError, ValueError):
    """Malformed input file or literal (truth table, distribution, tree)."""


class ZeroMassError(QclabError):
    """Conditioning or marginalizing on an event of probability zero."""


class SplitError(QclabError):
    """Distribution cannot be split by function value (one side empty)."""


class BudgetError(QclabError):
    """Requested computation exceeds an enumeration or state-space guard."""


class ConvergenceError(QclabError):
    """Iterative solver exhausted its iteration cap without certifying."""


class PreconditionError(QclabError):
    """An operation's stated precondition does not hold for the inputs."""


class TreeError(QclabError):
    """Decision tree is malformed for the requested operation."""
