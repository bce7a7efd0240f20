"""Exception hierarchy.

Validation problems (bad arguments, malformed files, inconsistent structures)
derive from :class:`ValidationError`; the CLI maps them to exit code 2.
Iterative solvers that fail to converge raise :class:`ConvergenceError`
(exit code 3).
"""


class ValidationError(ValueError):
    """Invalid argument, structure or input data."""


class StructuralError(ValidationError):
    """An object is inconsistent with another (e.g. a stump indexes a missing feature)."""


class DegenerateEnsembleError(ValidationError):
    """An ensemble has no mass to normalize."""


class IngestionError(ValidationError):
    """A data file could not be parsed into a Dataset."""


class ConvergenceError(ArithmeticError):
    """An iterative numerical routine exhausted its iteration cap."""
