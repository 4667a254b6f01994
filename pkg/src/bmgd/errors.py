"""Exception hierarchy shared by every bmgd module."""

from __future__ import annotations

import numpy as np


class BMGDError(Exception):
    """Base class for all library errors."""


class ShapeError(BMGDError, ValueError):
    pass


class DomainError(BMGDError, ValueError):
    pass


class FactorizationError(BMGDError, ArithmeticError):
    pass


class RankError(BMGDError, ArithmeticError):
    pass


class ConvergenceError(BMGDError, ArithmeticError):
    """Iterative method ran out of iterations; ``best`` is the last estimate."""

    def __init__(self, message: str, best: float | None = None):
        super().__init__(message)
        self.best = best


class SingularityError(BMGDError, ArithmeticError):
    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class SeparationError(BMGDError, ArithmeticError):
    pass


class FormatError(BMGDError, ValueError):
    """Malformed dataset file. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DivisibilityError(BMGDError, ValueError):
    pass


class ModeError(BMGDError, ValueError):
    pass


class ExhaustedError(BMGDError, IndexError):
    pass


class ConfigError(BMGDError, ValueError):
    pass


class DivergenceError(BMGDError, ArithmeticError):
    """Training produced a non-finite value; ``theta`` is the last finite iterate."""

    def __init__(self, message: str, theta: np.ndarray, iteration: int | None = None):
        super().__init__(message)
        self.theta = theta
        self.iteration = iteration
