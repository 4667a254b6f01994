"""Learning-rate / buffer-epoch schedules.

A schedule maps iteration ``r`` (1-based) to ``(alpha_r, T_r)``. Only
``StageWise`` varies the epoch count; the other variants keep ``T`` fixed and
decay ``alpha``, since the quantity that matters for convergence is the
product ``alpha_r * T_r``. ``Cosine`` additionally varies alpha with the step
index ``j`` inside an iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainError, ExhaustedError


def _check_T(T) -> int:
    if int(T) != T or T < 1:
        raise DomainError(f"epoch count T must be a positive integer, got {T}")
    return int(T)


def _check_r(r: int) -> None:
    if r < 1:
        raise DomainError("iteration numbers start at 1")


@dataclass(frozen=True)
class Constant:
    alpha: float
    T: int = 1

    def __post_init__(self):
        if self.alpha <= 0:
            raise DomainError("alpha must be positive")
        _check_T(self.T)

    def rate(self, r: int, j: int | None = None) -> tuple[float, int]:
        _check_r(r)
        return self.alpha, self.T


@dataclass(frozen=True)
class HorizonTuned:
    """Constant rate ``2 log(sqrt(MTK) R) / (mu M T K R)`` tuned to a run of R iterations."""

    mu: float
    M: int
    T: int
    K: int
    R: float

    def __post_init__(self):
        if self.mu <= 0:
            raise DomainError("mu must be positive")
        _check_T(self.T)
        if self.M < 1 or self.K < 1 or self.R < 1:
            raise DomainError("M, K and R must be at least 1")

    @property
    def alpha(self) -> float:
        mtk = self.M * self.T * self.K
        return 2.0 * math.log(math.sqrt(mtk) * self.R) / (self.mu * mtk * self.R)

    def rate(self, r: int, j: int | None = None) -> tuple[float, int]:
        _check_r(r)
        return self.alpha, self.T


@dataclass(frozen=True)
class Polynomial:
    """``alpha_r = c r^-gamma``."""

    c: float
    gamma: float
    T: int = 1

    def __post_init__(self):
        if self.c <= 0:
            raise DomainError("c must be positive")
        if self.gamma <= 0:
            raise DomainError("polynomial decay needs gamma > 0")
        _check_T(self.T)

    def rate(self, r: int, j: int | None = None) -> tuple[float, int]:
        _check_r(r)
        return self.c * r ** (-self.gamma), self.T


@dataclass(frozen=True)
class Exponential:
    """``alpha_r = c gamma^(r/b)``."""

    c: float
    gamma: float
    b: float = 1.0
    T: int = 1

    def __post_init__(self):
        if self.c <= 0:
            raise DomainError("c must be positive")
        if not 0 < self.gamma < 1:
            raise DomainError("exponential decay needs gamma in (0, 1)")
        if self.b <= 0:
            raise DomainError("exponential decay needs b > 0")
        _check_T(self.T)

    def rate(self, r: int, j: int | None = None) -> tuple[float, int]:
        _check_r(r)
        return self.c * self.gamma ** (r / self.b), self.T


@dataclass(frozen=True)
class StageWise:
    """Piecewise-constant ``(alpha, T)`` held for ``n_iters`` iterations per stage."""

    stages: tuple[tuple[float, int, int], ...]

    def __post_init__(self):
        if not self.stages:
            raise DomainError("StageWise needs at least one stage")
        for alpha, T, n in self.stages:
            if alpha <= 0 or n < 1:
                raise DomainError(f"bad stage {(alpha, T, n)}")
            _check_T(T)
        object.__setattr__(self, "stages", tuple((float(a), int(T), int(n)) for a, T, n in self.stages))

    @property
    def total_iterations(self) -> int:
        return sum(n for _, _, n in self.stages)

    def rate(self, r: int, j: int | None = None) -> tuple[float, int]:
        _check_r(r)
        left = r
        for alpha, T, n in self.stages:
            if left <= n:
                return alpha, T
            left -= n
        raise ExhaustedError(f"iteration {r} is past the last stage ({self.total_iterations} iterations)")


@dataclass(frozen=True)
class Cosine:
    """Per-step cosine cycle restarted each iteration, from ``alpha_max`` down to 0."""

    alpha_max: float
    T: int
    M: int
    K: int
    per_step: bool = field(default=True, init=False)

    def __post_init__(self):
        if self.alpha_max <= 0:
            raise DomainError("alpha_max must be positive")
        _check_T(self.T)

    def rate(self, r: int, j: int | None = None) -> tuple[float, int]:
        _check_r(r)
        steps = self.T * self.M * self.K
        if j is None or not 1 <= j <= steps:
            raise DomainError(f"cosine schedule needs a step index j in [1, {steps}]")
        half = 0.5 * self.alpha_max
        return half + half * math.cos(j * math.pi / steps), self.T


Schedule = Constant | HorizonTuned | Polynomial | Exponential | StageWise | Cosine


def varies_per_step(schedule) -> bool:
    return getattr(schedule, "per_step", False)


def steps_alpha(schedule, r: int, j: int) -> float:
    """Learning rate for step ``j`` of iteration ``r``."""
    return schedule.rate(r, j if varies_per_step(schedule) else None)[0]


@dataclass(frozen=True)
class ConditionReport:
    variant: str
    sum_diverges: bool | None
    cube_sum_converges: bool | None
    verdict: str
    reason: str
    partial_sum: float
    partial_cube_sum: float
    sum_bound: float | None = None


def _step_products(schedule, R_max: int) -> list[float]:
    """alpha_r T_r for r = 1..R_max (mean alpha over the iteration for Cosine)."""
    out = []
    for r in range(1, R_max + 1):
        if isinstance(schedule, Cosine):
            steps = schedule.T * schedule.M * schedule.K
            mean_alpha = math.fsum(schedule.rate(r, j)[0] for j in range(1, steps + 1)) / steps
            out.append(mean_alpha * schedule.T)
        elif isinstance(schedule, StageWise) and r > schedule.total_iterations:
            break
        else:
            alpha, T = schedule.rate(r)
            out.append(alpha * T)
    return out


def check_conditions(schedule, R_max: int = 1000) -> ConditionReport:
    """Classify a schedule against the diminishing-rate conditions.

    Condition (i): sum alpha_r T_r diverges; condition (ii): sum (alpha_r T_r)^3
    converges. The classification is analytic per variant; the partial sums up
    to ``R_max`` are reported alongside for reference.
    """
    if R_max < 10:
        raise DomainError("R_max must be at least 10")
    prods = _step_products(schedule, R_max)
    psum = math.fsum(prods)
    pcube = math.fsum(v**3 for v in prods)
    name = type(schedule).__name__
    bound = None
    if isinstance(schedule, Polynomial):
        g = schedule.gamma
        diverges = g <= 1.0
        cubes = g > 1.0 / 3.0
        if diverges and cubes:
            verdict, reason = "admissible", "gamma in (1/3, 1]: both conditions hold"
        elif not diverges:
            verdict, reason = "inadmissible", "gamma > 1: step sum converges, the initial error is never forgotten"
        else:
            verdict, reason = "inadmissible", "gamma <= 1/3: sum of cubed steps diverges"
    elif isinstance(schedule, Exponential):
        diverges, cubes = False, True
        q = schedule.gamma ** (1.0 / schedule.b)
        bound = schedule.c * schedule.T * q / (1.0 - q)
        verdict = "stalls before convergence"
        reason = "divergent-sum condition fails: geometric step sum is finite"
    elif isinstance(schedule, (Constant, HorizonTuned, Cosine)):
        diverges, cubes = True, False
        verdict = "inadmissible"
        reason = "non-decaying steps: sum of cubed steps diverges"
    elif isinstance(schedule, StageWise):
        diverges, cubes = None, None
        verdict = "case-dependent"
        reason = "finite stage list; convergent only if stage rates follow an admissible polynomial decay"
    else:
        raise DomainError(f"unknown schedule type {name}")
    return ConditionReport(name, diverges, cubes, verdict, reason, psum, pcube, bound)
