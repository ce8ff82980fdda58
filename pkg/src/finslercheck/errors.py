"""Exception hierarchy shared by all modules."""

from __future__ import annotations

import numpy as np


class FinslerCheckError(Exception):
    pass


class ExprSyntaxError(FinslerCheckError):
    def __init__(self, message: str, position: int, expected=()):
        self.position = position
        self.expected = tuple(expected)
        detail = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at position {position}{detail}")


class UnknownSymbolError(FinslerCheckError):
    def __init__(self, name: str, position: int):
        self.name = name
        self.position = position
        super().__init__(f"unknown symbol {name!r} at position {position}")


class IndexOutOfRangeError(FinslerCheckError):
    def __init__(self, name: str, dimension: int, position: int):
        self.name = name
        self.dimension = dimension
        self.position = position
        super().__init__(
            f"symbol {name!r} at position {position} is out of range for dimension {dimension}"
        )


class DomainError(FinslerCheckError, ArithmeticError):
    """An expression was evaluated outside its domain.

    ``mask`` marks the offending batch entries when evaluation was batched.
    """

    def __init__(self, message: str, mask=None, point=None):
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)
        self.point = point
        if point is not None:
            message = f"{message} at {point}"
        super().__init__(message)


class DerivativeOrderError(FinslerCheckError, ValueError):
    pass


class DepthBudgetError(DerivativeOrderError):
    """A derived field was asked for more derivatives than its inputs support."""


class DegenerateMetricError(FinslerCheckError):
    def __init__(self, message: str, singular_values=None, mask=None):
        self.singular_values = None if singular_values is None else np.asarray(singular_values)
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)
        if singular_values is not None:
            message = f"{message}; singular values {np.array2string(self.singular_values, precision=3)}"
        super().__init__(message)


class HomogeneityError(FinslerCheckError, ValueError):
    pass


class ConsistencyError(FinslerCheckError):
    """Two independent evaluations of the same quantity disagreed."""


class SamplingError(FinslerCheckError, ValueError):
    pass


class ScenarioError(FinslerCheckError):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
