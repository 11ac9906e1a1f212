"""Exception hierarchy shared by all modules.

The CLI maps :class:`InputError` subclasses to exit code 2 and
:class:`NumericalError` subclasses to exit code 3.
"""

from __future__ import annotations


class DmpMeshError(Exception):
    """Base class for all package errors."""


class InputError(DmpMeshError):
    """Malformed or inconsistent user input."""


class ParseError(InputError):
    """A file could not be parsed.

    Parameters
    ----------
    message : str
        What went wrong.
    path : str, optional
        File being parsed.
    line : int, optional
        1-based line number of the offending line.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class ValidationError(InputError):
    """A mesh or field violates a structural invariant."""


class SingularGeometryError(ValidationError):
    """An element is degenerate (zero or negative area)."""

    def __init__(self, message: str, element: int | None = None):
        self.element = element
        super().__init__(message)


class DomainError(InputError):
    """A coefficient is outside its admissible set (e.g. non-SPD tensor, negative reaction)."""


class ConfigurationError(InputError):
    """Problem data does not match the mesh (e.g. missing Dirichlet values)."""

    def __init__(self, message: str, vertices: list[int] | None = None):
        self.vertices = list(vertices) if vertices is not None else []
        super().__init__(message)


class NumericalError(DmpMeshError):
    """Numerical failure (singular factorization, capacity limits)."""


class SolverError(NumericalError):
    """Sparse factorization or solve failed."""


class CapacityError(NumericalError):
    """A dense computation exceeds the configured size cap."""


class BackendError(NumericalError):
    """An external remesher failed."""

    def __init__(self, message: str, output: str = ""):
        self.output = output
        super().__init__(message if not output else f"{message}\n{output}")
