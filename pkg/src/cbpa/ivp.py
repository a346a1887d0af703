"""Discrete multi-objective behavior optimization.

Behaviors map a point of a finite, uniformly discretized decision domain
(usually heading and speed) to a utility. The vehicle's strongest opinion
selects which behaviors are active; the decision is the grid point
maximizing the weighted utility sum.

Objectives are called with one numpy array per decision variable and must
broadcast, so a whole grid can be scored in one call.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .nod import strongest_option

GRID_CAP = 1_000_000
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float
    upper: float
    step: float

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"{self.name}: step must be positive")
        if self.upper < self.lower:
            raise ValueError(f"{self.name}: upper bound below lower bound")
        n = (self.upper - self.lower) / self.step
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"{self.name}: range is not an integer number of steps")

    @property
    def size(self) -> int:
        return int(round((self.upper - self.lower) / self.step)) + 1

    def values(self) -> np.ndarray:
        return self.lower + self.step * np.arange(self.size)


@dataclass(frozen=True)
class DecisionDomain:
    variables: tuple

    def __post_init__(self):
        if not self.variables:
            raise ValueError("decision domain needs at least one variable")

    @property
    def shape(self) -> tuple:
        return tuple(v.size for v in self.variables)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def names(self) -> tuple:
        return tuple(v.name for v in self.variables)

    def grids(self) -> list[np.ndarray]:
        return np.meshgrid(*[v.values() for v in self.variables], indexing="ij")

    def point(self, flat_index: int) -> dict:
        idx = np.unravel_index(flat_index, self.shape)
        return {v.name: float(v.values()[k]) for v, k in zip(self.variables, idx)}


def heading_speed_domain(heading_step=5.0, speed_max=2.0, speed_step=0.5) -> DecisionDomain:
    return DecisionDomain((Variable("heading", 0.0, 360.0 - heading_step, heading_step),
                           Variable("speed", 0.0, speed_max, speed_step)))


@dataclass
class Behavior:
    name: str
    objective: Callable
    weight: float = 1.0

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"behavior {self.name}: weight must be positive")


@dataclass
class OptionBehaviorMap:
    """0/1 matrix mapping options (rows) to behaviors (columns)."""

    matrix: np.ndarray
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or not np.all(np.isin(m, (0, 1))):
            raise ValueError("option-behavior map must be a 2-D 0/1 matrix")
        self.matrix = m.astype(int)
        for j, row in enumerate(self.matrix):
            if not row.any():
                self.warnings.append(f"option {j} activates no behaviors")


class NoActiveBehaviors(ValueError):
    pass


def circular_diff(a, b):
    """Smallest absolute angular difference in degrees, in [0, 180]."""
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 360.0)
    return np.minimum(d, 360.0 - d)


def heading_utility(target, spread=180.0):
    """Utility peaking at ``target`` degrees and decaying linearly to 0 at ``spread``."""
    def f(heading, speed=None):
        return np.maximum(0.0, 100.0 * (1.0 - circular_diff(heading, target) / spread))
    return f


def active_behaviors(z_i, amap: OptionBehaviorMap, behaviors: Sequence[Behavior]) -> list[Behavior]:
    if amap.matrix.shape != (len(z_i), len(behaviors)):
        raise ValueError("option-behavior map does not match options x behaviors")
    row = amap.matrix[strongest_option(z_i)]
    return [b for b, on in zip(behaviors, row) if on]


def _pick(total: np.ndarray) -> int:
    best = np.max(total)
    tol = TIE_RTOL * max(1.0, abs(best))
    return int(np.flatnonzero(total >= best - tol)[0])


def _check(domain: DecisionDomain, active):
    if not active:
        raise NoActiveBehaviors("no active behaviors to optimize")
    if domain.size > GRID_CAP:
        raise OverflowError(f"decision grid of {domain.size} points exceeds cap {GRID_CAP}")


class Solver:
    """Dense grid solver that caches the domain grids between calls."""

    def __init__(self, domain: DecisionDomain):
        self.domain = domain
        self._grids = domain.grids()

    def utilities(self, active: Sequence[Behavior]) -> np.ndarray:
        total = np.zeros(self.domain.shape)
        for b in active:
            total = total + b.weight * np.broadcast_to(b.objective(*self._grids), self.domain.shape)
        return total

    def solve(self, active: Sequence[Behavior]) -> dict:
        _check(self.domain, active)
        total = self.utilities(active).ravel()
        if not np.all(np.isfinite(total)):
            raise ValueError("behavior utilities must be finite over the whole domain")
        return self.domain.point(_pick(total))


def solve(domain: DecisionDomain, active: Sequence[Behavior]) -> dict:
    """Grid point maximizing the weighted utility sum; first index wins ties."""
    return Solver(domain).solve(active)


def brute_force_solve(domain: DecisionDomain, active: Sequence[Behavior]) -> dict:
    """Point-by-point exhaustive scan; reference for :func:`solve`."""
    _check(domain, active)
    vals = [v.values() for v in domain.variables]
    totals = []
    for pt in itertools.product(*vals):
        s = 0.0
        for b in active:
            s = s + b.weight * float(b.objective(*[np.asarray(x) for x in pt]))
        totals.append(s)
    return domain.point(_pick(np.array(totals)))
