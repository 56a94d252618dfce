"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit with 2,
convergence failures with 3.
"""


class CorrectSmoothError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CorrectSmoothError):
    """Malformed input: bad node ids, dimension mismatches, broken files."""


class ConvergenceError(CorrectSmoothError):
    """An iterative solver failed to reach its tolerance, or training diverged."""
