"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, detected blow-up with 3, linear algebra failures with 4.
"""


class ConfigurationError(Exception):
    """Invalid mesh/scheme/experiment parameters."""


class DataError(Exception):
    """Bad coefficient or geometry data (wrong shape, nonpositive value, ...)."""


class SolverError(Exception):
    """A linear solve or eigensolve failed to reach its required residual."""


class DegenerateConstraintsError(SolverError):
    """Constraint rows of a saddle system are (numerically) rank deficient."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class InstabilityError(Exception):
    """Time stepping produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
