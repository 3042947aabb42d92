"""
Exception types shared across the package.

Each error subclasses the built-in exception the calling code would otherwise
raise, so ``except ValueError`` keeps working for callers that do not care
about the finer distinction.
"""


class DomainError(ValueError):
    """Input outside an operation's domain (rank out of range, non-MHR, ...)."""


class SizeLimitError(ValueError):
    """A configured cap on profiles, LP nonzeros or depth was exceeded."""


class DivergenceError(ArithmeticError):
    """An expectation or integral does not converge."""


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


class SolverError(RuntimeError):
    """The LP solver reported unbounded, infeasible or non-converged status."""
