"""Exception hierarchy shared across the package.

Two broad families matter for the command-line exit codes: problems with
the input data (``DataError``) and failures of the numerical machinery
(``NumericalError``).
"""


class TcsimError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(TcsimError):
    """Bad command-line invocation (unknown flag, missing argument)."""


class DataError(TcsimError):
    """Invalid or inconsistent input data."""


class InvalidInputError(DataError):
    """A value violates an operation's preconditions (non-finite, wrong shape...)."""


class ParseError(DataError):
    """A data or config file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc += str(path)
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class IncompatibleGridsError(DataError):
    """Operation requires identical sampling grids but the grids differ."""


class DegenerateInputError(DataError):
    """Input is degenerate for the requested operation (e.g. zero variance)."""


class InvalidOrientationError(DataError):
    """A similarity matrix was passed where a dissimilarity was required (or vice versa)."""


class DegenerateClusteringError(DataError):
    """Clustering has no usable structure for the requested metric (e.g. all singletons)."""


class NumericalError(TcsimError):
    """Failure of a numerical routine."""


class FactorizationError(NumericalError):
    """Cholesky factorization failed even after the jitter retry."""


class OptimizationError(NumericalError):
    """All optimizer restarts failed; carries the best iterate seen."""

    def __init__(self, message, best_params=None, best_objective=None, grad_norm=None):
        super().__init__(message)
        self.best_params = best_params
        self.best_objective = best_objective
        self.grad_norm = grad_norm


class EigenSolverError(NumericalError):
    """Eigendecomposition failed."""


class DegenerateNullError(NumericalError):
    """Randomization null distribution has zero spread."""


class PairwiseError(NumericalError):
    """A pairwise computation failed; names the offending pair of series."""

    def __init__(self, id_a, id_b, cause):
        super().__init__(f"pairwise computation failed for ({id_a}, {id_b}): {cause}")
        self.id_a = id_a
        self.id_b = id_b


class ExperimentError(TcsimError):
    """Too many repeat failures for the experiment results to be trusted."""
