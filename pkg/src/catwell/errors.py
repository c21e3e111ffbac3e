"""Exception types shared across the package."""

from __future__ import annotations


class CatwellError(Exception):
    """Base class for all package errors."""


class ConfigError(CatwellError, ValueError):
    """Bad configuration file, unknown key, or invalid parameter value."""


class RegimeError(CatwellError, ValueError):
    """Parameters outside the supported physical regime (e.g. Delta > kappa/2)."""


class NonConvergenceError(CatwellError, RuntimeError):
    """A numerical procedure hit its refinement or iteration cap.

    ``best`` carries the last (unconverged) result when one exists.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class DegenerateGapError(CatwellError, ArithmeticError):
    """Energy gap too small for a derivative coupling to be meaningful."""


class BudgetExceededError(CatwellError, RuntimeError):
    """A ramp schedule does not fit inside the coherence-time budget.

    ``schedule`` is the truncated schedule that fits; ``lambda_reached`` and
    ``q_min_reached`` describe what is achievable.
    """

    def __init__(self, message: str, schedule=None, lambda_reached=None, q_min_reached=None):
        super().__init__(message)
        self.schedule = schedule
        self.lambda_reached = lambda_reached
        self.q_min_reached = q_min_reached
