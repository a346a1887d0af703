"""Assignment oracles: Hungarian matching and the iterated fleet-TSP approximation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class Assignment:
    rows: tuple
    cols: tuple
    cost: float

    def as_dict(self) -> dict:
        return dict(zip(self.rows, self.cols))


def _check_cost(cost) -> np.ndarray:
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2 or c.size == 0:
        raise ValueError("cost matrix must be a non-empty 2-D array")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix must be finite")
    return c


def hungarian(cost) -> Assignment:
    """Minimum-cost one-to-one assignment; rectangular matrices leave surplus rows or columns free."""
    c = _check_cost(cost)
    r, k = linear_sum_assignment(c)
    return Assignment(tuple(int(x) for x in r), tuple(int(x) for x in k), float(c[r, k].sum()))


def brute_force_assignment(cost) -> Assignment:
    """Exhaustive permutation search; reference for :func:`hungarian`."""
    c = _check_cost(cost)
    n_r, n_c = c.shape
    best = None
    if n_r <= n_c:
        for perm in itertools.permutations(range(n_c), n_r):
            s = sum(c[i, j] for i, j in enumerate(perm))
            if best is None or s < best[0] - 1e-12:
                best = (s, tuple(range(n_r)), perm)
    else:
        for perm in itertools.permutations(range(n_r), n_c):
            s = sum(c[i, j] for j, i in enumerate(perm))
            if best is None or s < best[0] - 1e-12:
                order = np.argsort(perm)
                best = (s, tuple(int(perm[j]) for j in order), tuple(int(j) for j in order))
    return Assignment(best[1], tuple(best[2]), float(best[0]))


def distance_matrix(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def fleet_tsp(agents, tasks, objective: str = "distance", speed: float = 1.0,
              service: float = 0.0) -> tuple[float, dict]:
    """Approximate fleet cost to visit every task by repeated Hungarian rounds.

    Each round matches free agents to remaining tasks and moves the matched
    agents onto their tasks. ``objective="distance"`` sums all legs;
    ``"completion_time"`` sums, per round, the longest leg over ``speed``
    plus the ``service`` time spent at each task. Returns the cost and the
    first-round claims ``{agent index: task index}``.
    """
    if objective not in ("distance", "completion_time"):
        raise ValueError(f"unknown fleet cost objective {objective!r}")
    tasks = np.asarray(tasks, dtype=float).reshape(-1, 2)
    pos = np.array(agents, dtype=float).reshape(-1, 2)
    if tasks.shape[0] == 0:
        return 0.0, {}
    if pos.shape[0] == 0:
        return float("inf"), {}
    remaining = list(range(tasks.shape[0]))
    total = 0.0
    claims = None
    while remaining:
        dist = distance_matrix(pos, tasks[remaining])
        m = hungarian(dist)
        if objective == "distance":
            total += m.cost
        else:
            total += float(np.max(dist[list(m.rows), list(m.cols)])) / speed + service
        if claims is None:
            claims = {r: remaining[c] for r, c in zip(m.rows, m.cols)}
        done = []
        for r, c in zip(m.rows, m.cols):
            pos[r] = tasks[remaining[c]]
            done.append(remaining[c])
        remaining = [t for t in remaining if t not in done]
    return total, claims


def fleet_tsp_brute(agents, tasks) -> float:
    """Exact minimum of the sum of open-path lengths; tiny instances only."""
    agents = np.asarray(agents, dtype=float).reshape(-1, 2)
    tasks = np.asarray(tasks, dtype=float).reshape(-1, 2)
    n_a, n_t = agents.shape[0], tasks.shape[0]
    best = float("inf")
    for owner in itertools.product(range(n_a), repeat=n_t):
        total = 0.0
        for a in range(n_a):
            mine = [t for t in range(n_t) if owner[t] == a]
            if not mine:
                continue
            total += min(
                sum(np.linalg.norm(np.vstack([agents[a], tasks[list(p)]])[1:] - np.vstack([agents[a], tasks[list(p)]])[:-1], axis=1))
                for p in itertools.permutations(mine))
        best = min(best, total)
    return best
