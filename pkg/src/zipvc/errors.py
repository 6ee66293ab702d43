"""Exception hierarchy. The CLI maps these classes onto process exit codes:
input/schema problems exit 3, numerical failures exit 2, anything else 4.
"""


class ZipvcError(Exception):
    """Base class for every error raised by this package."""


class InputError(ZipvcError):
    """Invalid user input: file schema, configuration, or argument values."""


class NumericalError(ZipvcError):
    """Numerical failure: non-convergence, quadrature breakdown, or a
    covariance estimate that is not usable."""


class ConvergenceError(NumericalError):
    """An iterative fit ran out of iterations or could not make progress."""

    def __init__(self, message, gradient_norm=None, iterations=None):
        super().__init__(message)
        self.gradient_norm = gradient_norm
        self.iterations = iterations


class BoundaryError(NumericalError):
    """The likelihood is maximized on the parameter boundary, so no interior
    maximum-likelihood estimate exists (for example, an all-zero outcome)."""
