"""Nonlinear opinion dynamics with optional attention feedback.

Shapes follow one convention throughout: an opinion state ``z`` is an array of
shape ``(..., n_agents, n_options)`` whose rows sum to zero. Leading batch
dimensions are allowed everywhere, so independent systems (e.g. a set of
random seeds) can be integrated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DIVERGENCE_LIMIT = 1e3


class DivergenceError(RuntimeError):
    """Raised when an integrated state leaves the finite, bounded region."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


def project_zero_sum(v):
    """Remove the mean along the last axis, i.e. apply I - (1/n) 11^T."""
    v = np.asarray(v, dtype=float)
    return v - v.mean(axis=-1, keepdims=True)


def saturation(x):
    return np.tanh(x)


def linear_saturation(x):
    """Identity in place of tanh; recovers the linearized model."""
    return x


@dataclass
class AgentParams:
    """Resistance ``d``, attention ``u`` (both per agent) and input ``b``."""

    d: np.ndarray
    u: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if np.any(self.d <= 0):
            raise ValueError("resistance d must be positive for every agent")

    @classmethod
    def homogeneous(cls, n_agents: int, n_options: int, d: float = 1.0, u: float = 0.0):
        return cls(np.full(n_agents, d), np.full(n_agents, u), np.zeros((n_agents, n_options)))


@dataclass
class AdjacencyTensor:
    """Influence weights; ``entries[..., i, k, j, l]`` is agent k / option l acting on agent i / option j."""

    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        e = self.entries
        if e.ndim < 4 or e.shape[-4] != e.shape[-3] or e.shape[-2] != e.shape[-1]:
            raise ValueError(f"adjacency tensor must have shape (..., Na, Na, No, No), got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("adjacency tensor has non-finite entries")
        na, no = e.shape[-4], e.shape[-1]
        ii = np.arange(na)
        jj = np.arange(no)
        self_same = e[..., ii, ii, :, :][..., jj, jj]
        if np.any(self_same < 0):
            raise ValueError("intra-agent same-option coupling must be nonnegative")

    @property
    def operator(self) -> np.ndarray:
        """Dense matrix mapping flattened ``z`` to the flattened inner sums ``(i, j, l)``.

        Only defined for an unbatched tensor; cached on first use.
        """
        op = getattr(self, "_operator", None)
        if op is None:
            na, no = self.n_agents, self.n_options
            op = np.einsum("ikjl,lm->ijlkm", self.entries, np.eye(no)).reshape(na * no * no, na * no)
            self._operator = op
        return op

    @property
    def n_agents(self) -> int:
        return self.entries.shape[-4]

    @property
    def n_options(self) -> int:
        return self.entries.shape[-1]

    @classmethod
    def from_option_matrices(cls, self_block, edge_block, adjacency):
        """Tensor with ``A_ii = self_block`` and ``A_ik = a_ik * edge_block`` (option-by-option matrices)."""
        a = np.asarray(adjacency, dtype=float)
        sb = np.asarray(self_block, dtype=float)
        eb = np.asarray(edge_block, dtype=float)
        t = np.einsum("ik,jl->ikjl", a, eb)
        for i in range(a.shape[0]):
            t[i, i] = sb
        return cls(t)


def homogeneous_tensor(adjacency, n_options: int, self_same=0.0, self_cross=0.0,
                       same=1.0, cross=0.0) -> AdjacencyTensor:
    """Homogeneous tensor built from the four coupling classes over a graph adjacency."""
    eye = np.eye(n_options)
    off = 1.0 - eye
    self_block = self_same * eye + self_cross * off
    edge_block = same * eye + cross * off
    return AdjacencyTensor.from_option_matrices(self_block, edge_block, adjacency)


def nod_rhs(z, params: AgentParams, tensor: AdjacencyTensor, sat: Callable = saturation, b=None):
    """Projected right-hand side ``P0 F(z)`` of the opinion dynamics."""
    z = np.asarray(z, dtype=float)
    if z.shape[-2:] != (tensor.n_agents, tensor.n_options):
        raise ValueError(f"state shape {z.shape} does not match tensor "
                         f"({tensor.n_agents} agents, {tensor.n_options} options)")
    if params.d.shape[-1] != z.shape[-2] or params.u.shape[-1] != z.shape[-2]:
        raise ValueError("agent parameter length does not match number of agents")
    b = params.b if b is None else b
    return _rhs_core(z, params.d, params.u, b, tensor, sat)


def _rhs_core(z, d, u, b, tensor, sat):
    if tensor.entries.ndim == 4:
        na, no = tensor.n_agents, tensor.n_options
        flat = z.reshape(z.shape[:-2] + (na * no,))
        inner = (flat @ tensor.operator.T).reshape(z.shape[:-2] + (na, no, no))
    else:
        inner = np.einsum("...ikjl,...kl->...ijl", tensor.entries, z)
    f = -d[..., None] * z + u[..., None] * sat(inner).sum(axis=-1) + b
    return f - f.mean(axis=-1, keepdims=True)


def two_option_rhs(z, alpha, gamma, params: AgentParams, f_opt, sat: Callable = saturation):
    """Scalar two-option reduction: ``-d z + u S(alpha z + Gamma z) + f_opt``.

    ``params.b`` is ignored; the input is ``f_opt``.
    """
    z = np.asarray(z, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), z.shape)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape[-2:] != (z.shape[-1], z.shape[-1]):
        raise ValueError("gamma must be n_agents x n_agents")
    if params.d.shape[-1] != z.shape[-1]:
        raise ValueError("agent parameter length does not match number of agents")
    arg = alpha * z + np.einsum("...ik,...k->...i", gamma, z)
    return -params.d * z + params.u * sat(arg) + f_opt


def two_option_tensor(alpha, gamma) -> AdjacencyTensor:
    """Full two-option tensor equivalent to ``two_option_rhs`` under ``z_i := z_i1``.

    Pair it with inputs ``b = (f/2, -f/2)`` per agent.
    """
    gamma = np.array(gamma, dtype=float)
    na = gamma.shape[0]
    g = gamma.copy()
    g[np.arange(na), np.arange(na)] = np.broadcast_to(np.asarray(alpha, dtype=float), (na,))
    t = np.einsum("ik,jl->ikjl", g, np.eye(2))
    return AdjacencyTensor(t)


def two_option_inputs(f_opt):
    f = np.asarray(f_opt, dtype=float)
    return np.stack([f / 2.0, -f / 2.0], axis=-1)


# -- attention -------------------------------------------------------------

@dataclass
class AttentionState:
    """Dynamic attention parameters.

    The saturation is ``u_lo + (u_hi - u_lo) x^2 / (x^2 + c^2)``.
    ``attention_adjacency`` defaults to ``A + I`` when built via :meth:`for_graph`.
    """

    u: np.ndarray
    tau_u: float
    u_lo: float
    u_hi: float
    attention_adjacency: np.ndarray
    c: float = 0.25

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.attention_adjacency = np.asarray(self.attention_adjacency, dtype=float)
        if not self.u_lo < self.u_hi:
            raise ValueError("attention bounds require u_lo < u_hi")
        if self.tau_u <= 0:
            raise ValueError("tau_u must be positive")
        if np.any(self.u < 0):
            raise ValueError("attention must be nonnegative")

    @classmethod
    def for_graph(cls, adjacency, tau_u=1.0, u_lo=0.2, u_hi=1.0, u0=None, c=0.25):
        a = np.asarray(adjacency, dtype=float)
        n = a.shape[0]
        u = np.full(n, u_lo) if u0 is None else np.asarray(u0, dtype=float)
        return cls(u, tau_u, u_lo, u_hi, a + np.eye(n), c)

    def saturate(self, x):
        x2 = np.square(x)
        return self.u_lo + (self.u_hi - self.u_lo) * x2 / (x2 + self.c ** 2)


def attention_drive(z, attention_adjacency):
    """``(1/No) sum_k sum_l (abar_ik z_kl)^2`` for every agent i."""
    z = np.asarray(z, dtype=float)
    sq = np.square(z).sum(axis=-1)
    return np.einsum("...ik,...k->...i", np.square(attention_adjacency), sq) / z.shape[-1]


def attention_rhs(att: AttentionState, z, u=None):
    u = att.u if u is None else u
    return (-u + att.saturate(attention_drive(z, att.attention_adjacency))) / att.tau_u


# -- analysis helpers ----------------------------------------------------

def critical_attention(d: float, lambda_max_tensor: float) -> float:
    if lambda_max_tensor <= 0:
        raise ValueError("critical attention needs a positive leading eigenvalue")
    return d / lambda_max_tensor


def _zero_sum_basis(n: int) -> np.ndarray:
    q, _ = np.linalg.qr(np.eye(n) - 1.0 / n)
    return q[:, : n - 1]


def tensor_lambda_max(tensor: AdjacencyTensor) -> float:
    """Leading eigenvalue (max real part) of the tensor acting on the zero-sum subspace."""
    na, no = tensor.n_agents, tensor.n_options
    m = tensor.entries.transpose(0, 2, 1, 3).reshape(na * no, na * no)
    qb = np.kron(np.eye(na), _zero_sum_basis(no))
    w = np.linalg.eigvals(qb.T @ m @ qb)
    return float(np.max(w.real))


def classify_coupling(tensor: AdjacencyTensor, i: int, k: int, tol: float = 1e-12) -> str:
    """'cooperation', 'competition' or 'neutral' for the influence of agent k on agent i."""
    block = tensor.entries[i, k]
    no = block.shape[0]
    diag = np.diag(block)
    off = block[~np.eye(no, dtype=bool)]
    if np.ptp(diag) > tol or (off.size and np.ptp(off) > tol):
        raise ValueError(f"coupling block ({i}, {k}) is not homogeneous")
    diff = diag[0] - (off[0] if off.size else 0.0)
    if diff > tol:
        return "cooperation"
    if diff < -tol:
        return "competition"
    return "neutral"


def strongest_option(z_i) -> int:
    """Index of the first largest entry."""
    return int(np.argmax(np.asarray(z_i)))


# -- integration ---------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray
    u: np.ndarray | None = None
    settled_step: int | None = None

    @property
    def final(self) -> np.ndarray:
        return self.z[-1]


def integrate(z0, params: AgentParams, tensor: AdjacencyTensor, att: AttentionState | None = None,
              dt: float = 0.02, steps: int = 1000, input_hook: Callable | None = None,
              sat: Callable = saturation, reproject: bool = True, record_every: int = 1,
              stop_at_equilibrium: bool = False, eq_tol: float = 1e-6, eq_window: int = 50,
              t0: float = 0.0) -> Trajectory:
    """Fixed-step RK4 integration of the opinion (and optionally attention) dynamics.

    ``input_hook(t, z, u)`` returns the input ``b`` held for the step starting
    at ``t``; otherwise ``params.b`` is used. With ``att`` given, attention is
    integrated jointly and ``params.u`` is ignored.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z = np.array(z0, dtype=float)
    u = None if att is None else np.broadcast_to(att.u, z.shape[:-1]).astype(float)
    u_fixed = params.u

    nod_rhs(z, params, tensor, sat)  # shape validation
    d = params.d

    def rhs(zz, uu, b):
        dz = _rhs_core(zz, d, u_fixed if uu is None else uu, b, tensor, sat)
        du = None if uu is None else attention_rhs(att, zz, uu)
        return dz, du

    ts, zs, us = [t0], [z.copy()], [None if u is None else u.copy()]
    settled = None
    calm = 0
    for n in range(steps):
        t = t0 + n * dt
        b = params.b if input_hook is None else np.asarray(input_hook(t, z, u), dtype=float)
        k1z, k1u = rhs(z, u, b)
        if u is None:
            k2z, _ = rhs(z + 0.5 * dt * k1z, None, b)
            k3z, _ = rhs(z + 0.5 * dt * k2z, None, b)
            k4z, _ = rhs(z + dt * k3z, None, b)
        else:
            k2z, k2u = rhs(z + 0.5 * dt * k1z, u + 0.5 * dt * k1u, b)
            k3z, k3u = rhs(z + 0.5 * dt * k2z, u + 0.5 * dt * k2u, b)
            k4z, k4u = rhs(z + dt * k3z, u + dt * k3u, b)
            u = u + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        z = z + dt / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
        if reproject:
            z = z - z.mean(axis=-1, keepdims=True)
        peak = np.max(np.abs(z)) if z.size else 0.0
        if not np.isfinite(peak) or peak > DIVERGENCE_LIMIT:
            raise DivergenceError(n + 1, f"opinion state diverged (max |z| = {peak:.3g})")
        if (n + 1) % record_every == 0 or n + 1 == steps:
            ts.append(t + dt)
            zs.append(z.copy())
            us.append(None if u is None else u.copy())
        if stop_at_equilibrium:
            if np.max(np.abs(k1z)) < eq_tol:
                calm += 1
                if calm >= eq_window:
                    settled = n + 1
                    if ts[-1] != t + dt:
                        ts.append(t + dt)
                        zs.append(z.copy())
                        us.append(None if u is None else u.copy())
                    break
            else:
                calm = 0
    return Trajectory(np.array(ts), np.array(zs), None if u is None else np.array(us), settled)
