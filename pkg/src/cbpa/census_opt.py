"""Second-order distributed optimization with partially observed costs.

The global cost is split into a locally observed part, whose gradient each
agent can evaluate, and an unobserved part that enters only through its
Hessian. The Hessian acts on the opinion state of neighbours, so agents never
need to invert it or to agree on the unobserved quantities.

Also holds the classical reductions of the opinion model (continuous and
discrete consensus with gradient descent, the potential-game view) which
double as test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .netgraph import Graph, adjacency_and_laplacian, is_connected
from .nod import DIVERGENCE_LIMIT, DivergenceError


@dataclass
class DecomposedCost:
    """Observed-gradient and unobserved-Hessian callbacks plus the step gain ``eta``."""

    grad_obs: Callable
    hessian_unobs: Callable
    eta: float = 1.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")


@dataclass
class BurdenModel:
    """Battery-burden model for the equal cost burden objective.

    ``kappa(i, z_i, t)`` returns agent i's exhaustion fraction; ``dkappa_dz``
    is the marginal exhaustion of choosing the costly option (scalar or per
    agent). ``mode`` selects the sign of the cross curvature.
    """

    kappa: Callable | None = None
    dkappa_dz: float | np.ndarray = 1.0
    mode: str = "consensus"

    def __post_init__(self):
        if self.mode not in ("consensus", "dissensus"):
            raise ValueError(f"unknown burden mode {self.mode!r}")


def second_order_rhs(dz, z_ref, cost: DecomposedCost) -> np.ndarray:
    """``-eta (H_unobs(z_ref) dz + grad_obs(z_ref))``."""
    dz = np.asarray(dz, dtype=float)
    h = np.asarray(cost.hessian_unobs(z_ref), dtype=float)
    g = np.asarray(cost.grad_obs(z_ref), dtype=float)
    if h.shape != (dz.size, dz.size) or g.shape != dz.shape:
        raise ValueError("cost callbacks disagree with the state dimension")
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
        raise ValueError("cost callback returned non-finite values")
    return -cost.eta * (h @ dz + g)


def mask_hessian(h, g: Graph) -> np.ndarray:
    """Mean-field masking: keep pairwise curvature only along graph edges.

    The diagonal (self curvature) is passed through unchanged.
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (g.n_nodes, g.n_nodes):
        raise ValueError(f"Hessian shape {h.shape} does not match a {g.n_nodes}-node graph")
    a, _ = adjacency_and_laplacian(g)
    mask = (a > 0) | np.eye(g.n_nodes, dtype=bool)
    return np.where(mask, h, 0.0)


def burden_variance(kappa) -> float:
    k = np.asarray(kappa, dtype=float)
    if k.size == 0:
        raise ValueError("burden variance of an empty fleet is undefined")
    return float(np.sum((k - k.mean()) ** 2))


def burden_inputs(model: BurdenModel, kappa_i: float, eta1: float, i: int = 0) -> tuple[float, float]:
    """Patrol and loiter inputs ``(-eta1 dk/dz kappa_i, +eta1 dk/dz kappa_i)``.

    A more exhausted agent gets a stronger push toward the cheap option.
    """
    dk = np.broadcast_to(np.asarray(model.dkappa_dz, dtype=float), (i + 1,))[i] \
        if np.ndim(model.dkappa_dz) == 0 else float(np.asarray(model.dkappa_dz)[i])
    f_patrol = -eta1 * float(dk) * kappa_i
    return f_patrol, -f_patrol


def burden_curvature_scale(n: int, dkappa_dz=1.0) -> float:
    """Magnitude ``(2/N)(1 - 1/N) dk^2`` of the off-diagonal burden curvature."""
    return 2.0 / n * (1.0 - 1.0 / n) * float(np.mean(np.square(dkappa_dz)))


def burden_hessian(model: BurdenModel, n: int, normalized: bool = False) -> np.ndarray:
    """Hollow Hessian of the unobserved burden cost for a homogeneous fleet.

    Off-diagonal entries are ``-(2/N)(1-1/N) d(k_i k_j)/dz_i dz_j`` where the
    cross derivative is ``+dk^2`` in consensus mode and ``-dk^2`` in dissensus
    mode. ``normalized=True`` divides by ``-(2/N)(1-1/N) dk^2`` so the
    consensus matrix becomes ``11^T - I`` with spectrum {N-1, -1 (x N-1)}.
    """
    if n < 1:
        raise ValueError("need at least one agent")
    dk = np.broadcast_to(np.asarray(model.dkappa_dz, dtype=float), (n,))
    sign = 1.0 if model.mode == "consensus" else -1.0
    cross = sign * np.outer(dk, dk)
    if normalized:
        h = cross / float(np.mean(dk ** 2))
    else:
        h = -2.0 / n * (1.0 - 1.0 / n) * cross
    np.fill_diagonal(h, 0.0)
    return h


def burden_cost(model: BurdenModel, kappa0, n: int | None = None, eta: float = 1.0,
                graph: Graph | None = None) -> DecomposedCost:
    """Decomposed equal-burden cost with linear exhaustion ``kappa_i = kappa0_i + dk z_i``.

    The observed gradient is ``2 (1 - 1/N)^2 kappa_i(z_i) dk``; the
    unobserved Hessian is :func:`burden_hessian`, masked to ``graph`` if given.
    """
    kappa0 = np.asarray(kappa0, dtype=float)
    n = kappa0.size if n is None else n
    dk = np.broadcast_to(np.asarray(model.dkappa_dz, dtype=float), (n,))
    sign = 1.0 if model.mode == "consensus" else -1.0
    h = burden_hessian(model, n)
    if graph is not None:
        h = mask_hessian(h, graph)
    c = 2.0 * (1.0 - 1.0 / n) ** 2

    def grad_obs(z):
        return sign * c * (kappa0 + dk * np.asarray(z)) * dk

    return DecomposedCost(grad_obs, lambda z: h, eta)


def _clip_ball(z, radius=1.0):
    nrm = np.linalg.norm(z)
    return z * (radius / nrm) if nrm > radius else z


def equal_burden_flow(n: int, model: BurdenModel, g: Graph, eta: float, z0, steps: int,
                      dt: float = 0.02, kappa0=None, use_hessian: bool = True,
                      clip: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the second-order equal-burden flow on the unit ball.

    Each agent re-evaluates its observed gradient at its current opinion and
    applies the (masked) unobserved Hessian to the opinion deviation from the
    neutral point. ``use_hessian=False`` is the gradient-only ablation.
    Returns ``(t, z)`` with ``z`` of shape ``(steps + 1, n)``.
    """
    if not is_connected(g):
        raise ValueError("equal burden flow needs a connected graph")
    kappa0 = np.zeros(n) if kappa0 is None else np.asarray(kappa0, dtype=float)
    cost = burden_cost(model, kappa0, n, eta, graph=g)
    if not use_hessian:
        zero = np.zeros((n, n))
        cost = DecomposedCost(cost.grad_obs, lambda z: zero, eta)
    z_lin = np.zeros(n)

    def f(z):
        # Hessian is constant for linear exhaustion, so evaluating it at z is exact
        return second_order_rhs(z - z_lin, z, cost)

    z = np.array(z0, dtype=float)
    out = [z.copy()]
    for k in range(steps):
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if clip:
            z = _clip_ball(z)
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > DIVERGENCE_LIMIT:
            raise DivergenceError(k + 1, "equal burden flow diverged")
        out.append(z.copy())
    return np.arange(steps + 1) * dt, np.array(out)


# -- classical reductions --------------------------------------------------

def _check_laplacian(lap, tol=1e-12):
    lap = np.asarray(lap, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ValueError("Laplacian must be square")
    if np.max(np.abs(lap.sum(axis=1)), initial=0.0) > tol or np.max(np.abs(lap - lap.T), initial=0.0) > tol:
        raise ValueError("matrix is not a symmetric zero-row-sum Laplacian")
    return lap


def consensus_gradient_rhs(zbar, lap, grad_F: Callable, eta3: float) -> np.ndarray:
    """Continuous consensus plus gradient descent: ``-L z - eta3 grad F(z)``."""
    lap = _check_laplacian(lap)
    zbar = np.asarray(zbar, dtype=float)
    return -lap @ zbar - eta3 * np.asarray(grad_F(zbar), dtype=float)


def discrete_consensus_step(chi, eps: float, lap, F_D: Callable | None, eta4: float = 0.0) -> np.ndarray:
    """One step of ``(I - eps L) chi + eta4 F_D(chi)``."""
    lap = _check_laplacian(lap)
    dmax = float(np.max(np.diag(lap), initial=0.0))
    if not (eps > 0 and (dmax == 0 or eps < 1.0 / dmax)):
        raise ValueError(f"eps={eps} outside (0, 1/d_max) with d_max={dmax}")
    chi = np.asarray(chi, dtype=float)
    out = chi - eps * (lap @ chi)
    if F_D is not None:
        out = out + eta4 * np.asarray(F_D(chi), dtype=float)
    return out


def _check_potential_args(D, Gamma):
    D = np.asarray(D, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    if np.any(D - np.diag(np.diag(D))) or np.any(np.diag(D) <= 0):
        raise ValueError("D must be diagonal with positive entries")
    if not np.allclose(Gamma, Gamma.T, atol=1e-12, rtol=0):
        raise ValueError("a potential exists only for symmetric Gamma")
    return D, Gamma


def potential_value(zbar, D, Gamma, F: Callable | None = None) -> float:
    """Global potential ``1/2 z^T (-D + Gamma)^T z + F(z)``."""
    D, Gamma = _check_potential_args(D, Gamma)
    z = np.asarray(zbar, dtype=float)
    val = 0.5 * z @ (-D + Gamma).T @ z
    return float(val + (F(z) if F is not None else 0.0))


def local_utility(i: int, zbar, D, Gamma, F_i: Callable | None = None) -> float:
    """Agent i's utility ``-1/2 d_i z_i^2 + 1/2 z_i sum_k gamma_ik z_k + F_i(z)``."""
    D, Gamma = _check_potential_args(D, Gamma)
    z = np.asarray(zbar, dtype=float)
    coupling = sum(Gamma[i, k] * z[k] for k in range(z.size) if k != i)
    val = -0.5 * D[i, i] * z[i] ** 2 + 0.5 * z[i] * coupling
    return float(val + (F_i(z) if F_i is not None else 0.0))


def potential_flow_rhs(zbar, D, Gamma, grad_F: Callable | None = None) -> np.ndarray:
    """Linearized flow ``(-D + Gamma) z + grad F(z)`` whose potential is :func:`potential_value`."""
    z = np.asarray(zbar, dtype=float)
    out = (-np.asarray(D) + np.asarray(Gamma)) @ z
    if grad_F is not None:
        out = out + np.asarray(grad_F(z), dtype=float)
    return out
