"""Exception hierarchy.

Every error carries a short ``category`` string that the command line
prints verbatim so scripts can branch on it.
"""


class HandfitError(Exception):
    category = "error"


class DimensionError(HandfitError, ValueError):
    category = "dimension"


class SchemaError(HandfitError, ValueError):
    category = "schema"


class InvariantError(HandfitError, ValueError):
    category = "invariant"


class DegenerateError(HandfitError, ValueError):
    category = "degenerate"


class DivergenceError(HandfitError, ArithmeticError):
    """Raised when the objective becomes non-finite during fitting."""

    category = "divergence"

    def __init__(self, message, iteration=None, result=None):
        super().__init__(message)
        self.iteration = iteration
        self.result = result
