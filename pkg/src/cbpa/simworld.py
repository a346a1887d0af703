"""Deterministic world stepping for fleets of surface vehicles.

Headings are compass degrees (0 = north, 90 = east, clockwise positive),
positions are meters with +x east and +y north.

Each world step runs in a fixed order::

    perceive (comm graph) -> opinion substeps -> readout -> behavior solve
    -> actuate (kinematics, battery) -> scenario events

Agents see their neighbours' opinions from the previous broadcast tick
(one tick per opinion substep).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import ivp
from .netgraph import Graph, adjacency_and_laplacian, build_graph
from .nod import DIVERGENCE_LIMIT, AdjacencyTensor, AttentionState, DivergenceError, strongest_option


class MissionError(RuntimeError):
    """Invariant violation or divergence during a mission, tagged with the step index."""

    def __init__(self, step: int, check: str, detail: str):
        super().__init__(f"step {step}: {check}: {detail}")
        self.step = step
        self.check = check
        self.detail = detail

    def record(self) -> dict:
        return {"step": self.step, "check": self.check, "detail": self.detail}


@dataclass
class VehicleState:
    x: float
    y: float
    heading: float = 0.0
    speed: float = 0.0
    kappa: float = 0.0
    team: str = "blue"
    option: int = 0
    disabled: bool = False

    @property
    def pos(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass
class WorldConfig:
    dt: float = 1.0
    comm_range: float = 160.0
    v_max: float = 2.0
    turn_rate_max: float = 30.0
    speed_tau: float = 2.0
    opinion_substeps: int = 10
    duration: float = 600.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("world dt must be positive")
        if self.comm_range <= 0:
            raise ValueError("comm_range must be positive")
        if self.opinion_substeps < 1:
            raise ValueError("opinion_substeps must be at least 1")


def wrap_heading(h: float) -> float:
    h = math.fmod(h, 360.0)
    if h < 0:
        h += 360.0          # may round up to exactly 360 for tiny negatives
    return 0.0 if h >= 360.0 else h


def heading_to(dx: float, dy: float) -> float:
    """Compass heading of the vector (dx, dy)."""
    return wrap_heading(math.degrees(math.atan2(dx, dy)))


def step_vehicle(state: VehicleState, ref: tuple, cfg: WorldConfig, dt: float | None = None) -> VehicleState:
    """Rate-limited heading, first-order speed lag, then position update.

    This is a simple stand-in for a real vehicle controller. A reference
    exactly behind the vehicle turns to starboard.
    """
    dt = cfg.dt if dt is None else dt
    ref_h, ref_v = float(ref[0]), float(ref[1])
    err = math.fmod(ref_h - state.heading, 360.0)
    if err > 180.0:
        err -= 360.0
    elif err <= -180.0:
        err += 360.0
    max_turn = cfg.turn_rate_max * dt
    turn = max(-max_turn, min(max_turn, err))
    heading = wrap_heading(state.heading + turn)
    ref_v = min(max(ref_v, 0.0), cfg.v_max)
    alpha = 1.0 if cfg.speed_tau <= 0 else 1.0 - math.exp(-dt / cfg.speed_tau)
    speed = state.speed + alpha * (ref_v - state.speed)
    speed = min(max(speed, 0.0), cfg.v_max)
    rad = math.radians(heading)
    return replace(state, heading=heading, speed=speed,
                   x=state.x + speed * dt * math.sin(rad), y=state.y + speed * dt * math.cos(rad))


def comm_graph(positions, comm_range: float, active=None) -> Graph:
    """Disk graph: edge iff distance <= range; inactive vehicles get no edges."""
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = p.shape[0]
    if n < 1:
        raise ValueError("comm graph needs at least one vehicle")
    active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    d = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if active[i] and active[j] and d[i, j] <= comm_range]
    return build_graph(n, edges)


def step_battery(state: VehicleState, rate: float, dt: float) -> VehicleState:
    """Integrate exhaustion at ``rate`` per second, clamped at 1 (vehicle disabled)."""
    if state.disabled:
        return state
    kappa = min(1.0, state.kappa + max(rate, 0.0) * dt)
    return replace(state, kappa=kappa, disabled=kappa >= 1.0)


def speed_scaled_rate(base: float, speed: float, per_speed2: float) -> float:
    return base + per_speed2 * speed * speed


def substream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one subsystem, keyed by a fixed label."""
    return np.random.default_rng([int(seed), zlib.crc32(label.encode())])


# -- traces ---------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class TraceBundle:
    header: list
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def events_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    def metrics_json(self) -> str:
        return json.dumps(self.metrics, sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        h = hashlib.sha256()
        for part in (self.trace_csv(), self.events_jsonl(), self.metrics_json()):
            h.update(part.encode())
        return h.hexdigest()


# -- mission loop ------------------------------------------------------------

class ScenarioPack:
    """Hooks a mission supplies to :func:`run_mission`.

    Subclasses set ``options`` and the coupling blocks and override the
    hooks they need. ``nod_enabled = False`` zeroes all social influence.
    """

    name = "base"
    options: tuple = ("idle",)
    d = 1.0
    u = 1.0
    attention: dict | None = None
    nod_enabled = True

    def setup(self, world: "World") -> None:
        raise NotImplementedError

    def coupling(self, world: "World") -> tuple[np.ndarray, np.ndarray]:
        no = len(self.options)
        return np.zeros((no, no)), np.zeros((no, no))

    def influence_adjacency(self, world: "World") -> np.ndarray:
        """Which comm links carry opinion influence; all of them by default."""
        return adjacency_and_laplacian(world.graph)[0]

    def inputs(self, world: "World") -> np.ndarray:
        return np.zeros((len(world.vehicles), len(self.options)))

    def select_options(self, world: "World") -> list[int]:
        return [strongest_option(row) for row in world.z]

    def behaviors(self, world: "World", i: int) -> list:
        return []

    def battery_rate(self, world: "World", i: int) -> float:
        return 0.0

    def advance(self, world: "World") -> None:
        pass

    def metrics(self, world: "World") -> dict:
        return {}


class World:
    def __init__(self, cfg: WorldConfig, pack: ScenarioPack, seed: int, domain: ivp.DecisionDomain | None = None):
        self.cfg = cfg
        self.pack = pack
        self.seed = int(seed)
        self.t = 0.0
        self.step_index = 0
        self.vehicles: list[VehicleState] = []
        self.env: dict = {}
        self.events: list = []
        self.domain = domain or ivp.heading_speed_domain(speed_max=cfg.v_max)
        self.solver = ivp.Solver(self.domain)
        self.rng = {}
        self.graph: Graph | None = None
        self.refs: list = []
        self.z = None
        self.u = None

    def stream(self, label: str) -> np.random.Generator:
        if label not in self.rng:
            self.rng[label] = substream(self.seed, label)
        return self.rng[label]

    def log(self, kind: str, **data) -> None:
        self.events.append({"t": round(self.t, 6), "step": self.step_index, "event": kind, **data})

    @property
    def n(self) -> int:
        return len(self.vehicles)

    def positions(self) -> np.ndarray:
        return np.array([[v.x, v.y] for v in self.vehicles])

    def active(self) -> np.ndarray:
        return np.array([not v.disabled for v in self.vehicles])


def _split_operator(tensor: AdjacencyTensor) -> tuple[np.ndarray, np.ndarray]:
    e = tensor.entries
    na = e.shape[0]
    mask = np.eye(na, dtype=bool)[:, :, None, None]
    own = AdjacencyTensor.__new__(AdjacencyTensor)
    own.entries = np.where(mask, e, 0.0)
    nbr = AdjacencyTensor.__new__(AdjacencyTensor)
    nbr.entries = np.where(mask, 0.0, e)
    return own.operator, nbr.operator


def opinion_step(world: World, b: np.ndarray) -> None:
    """Advance opinions (and attention) over one world step.

    The step is split into ``opinion_substeps`` broadcast ticks. Within a
    tick an agent integrates its own state with RK4 while its neighbours'
    opinions stay at their values from the previous tick.
    """
    pack = world.pack
    na, no = world.z.shape
    a = pack.influence_adjacency(world)
    self_block, edge_block = pack.coupling(world)
    if not pack.nod_enabled:
        self_block = np.zeros_like(self_block)
        edge_block = np.zeros_like(edge_block)
    tensor = AdjacencyTensor.from_option_matrices(self_block, edge_block, a)
    op_own, op_nbr = _split_operator(tensor)
    d = np.full(na, pack.d)
    att = None
    if pack.attention is not None:
        att = AttentionState(world.u, pack.attention["tau_u"], pack.attention["u_lo"],
                             pack.attention["u_hi"], a + np.eye(na), pack.attention.get("c", 0.25))
        abar2 = np.square(att.attention_adjacency)
        abar2_own = np.diag(abar2).copy()
        abar2_nbr = abar2 - np.diag(abar2_own)

    def f(z, u, nbr_inner, nbr_drive):
        inner = (op_own @ z.ravel() + nbr_inner).reshape(na, no, no)
        uu = u if att is not None else np.full(na, pack.u)
        fz = -d[:, None] * z + uu[:, None] * np.tanh(inner).sum(axis=-1) + b
        fz = fz - fz.mean(axis=1, keepdims=True)
        if att is None:
            return fz, None
        drive = (nbr_drive + abar2_own * np.square(z).sum(axis=1)) / no
        return fz, (-u + att.saturate(drive)) / att.tau_u

    h = world.cfg.dt / world.cfg.opinion_substeps
    z, u = world.z, world.u
    for _ in range(world.cfg.opinion_substeps):
        nbr_inner = op_nbr @ z.ravel()
        nbr_drive = abar2_nbr @ np.square(z).sum(axis=1) if att is not None else None
        k1z, k1u = f(z, u, nbr_inner, nbr_drive)
        if att is None:
            k2z, _ = f(z + 0.5 * h * k1z, None, nbr_inner, None)
            k3z, _ = f(z + 0.5 * h * k2z, None, nbr_inner, None)
            k4z, _ = f(z + h * k3z, None, nbr_inner, None)
        else:
            k2z, k2u = f(z + 0.5 * h * k1z, u + 0.5 * h * k1u, nbr_inner, nbr_drive)
            k3z, k3u = f(z + 0.5 * h * k2z, u + 0.5 * h * k2u, nbr_inner, nbr_drive)
            k4z, k4u = f(z + h * k3z, u + h * k3u, nbr_inner, nbr_drive)
            u = u + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        z = z + h / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
        z = z - z.mean(axis=1, keepdims=True)
    peak = float(np.max(np.abs(z)))
    if not np.isfinite(peak) or peak > DIVERGENCE_LIMIT:
        raise DivergenceError(world.step_index, f"opinion state diverged (max |z| = {peak:.3g})")
    # disabled vehicles keep their last opinion
    act = world.active()
    world.z = np.where(act[:, None], z, world.z)
    if att is not None:
        world.u = np.where(act, u, world.u)


def trace_header(options) -> list:
    return (["t", "id", "x", "y", "heading", "speed", "kappa"]
            + [f"z_{o}" for o in options] + ["u", "option", "ref_heading", "ref_speed"])


def run_mission(cfg: WorldConfig, pack: ScenarioPack, seed: int, record_every: int = 1,
                domain: ivp.DecisionDomain | None = None, check_invariants: bool = True) -> TraceBundle:
    """Run one mission and return its replayable trace."""
    world = World(cfg, pack, seed, domain)
    pack.setup(world)
    na, no = world.n, len(pack.options)
    if world.z is None:
        world.z = np.zeros((na, no))
    if world.u is None:
        u0 = pack.attention["u_lo"] if pack.attention else pack.u
        world.u = np.full(na, float(u0))
    world.refs = [(v.heading, 0.0) for v in world.vehicles]
    bundle = TraceBundle(trace_header(pack.options))
    n_steps = int(round(cfg.duration / cfg.dt))
    for s in range(n_steps):
        world.step_index = s
        world.graph = comm_graph(world.positions(), cfg.comm_range, world.active())
        if check_invariants:
            a, _ = adjacency_and_laplacian(world.graph)
            if not np.array_equal(a, a.T):
                raise MissionError(s, "comm_symmetry", "communication graph not symmetric")
        b = np.asarray(pack.inputs(world), dtype=float)
        try:
            opinion_step(world, b)
        except DivergenceError as exc:
            raise MissionError(s, "divergence", str(exc)) from None
        if not (np.all(np.isfinite(world.z)) and np.all(np.isfinite(world.u))):
            raise MissionError(s, "divergence", "non-finite opinion or attention state")
        chosen = pack.select_options(world)
        for i, v in enumerate(world.vehicles):
            if v.disabled:
                continue
            if chosen[i] != v.option:
                world.log("option_change", vehicle=i, old=pack.options[v.option], new=pack.options[chosen[i]])
            world.vehicles[i] = replace(v, option=int(chosen[i]))
        refs = []
        for i, v in enumerate(world.vehicles):
            if v.disabled:
                refs.append((v.heading, 0.0))
                continue
            active = pack.behaviors(world, i)
            if active:
                pt = world.solver.solve(active)
                refs.append((pt["heading"], pt["speed"]))
            else:
                refs.append((v.heading, 0.0))
        world.refs = refs
        for i, v in enumerate(world.vehicles):
            if v.disabled:
                world.vehicles[i] = replace(v, speed=0.0)
                continue
            old = v
            nv = step_vehicle(v, refs[i], cfg)
            nv = step_battery(nv, pack.battery_rate(world, i), cfg.dt)
            if check_invariants:
                if nv.speed > cfg.v_max + 1e-12 or nv.speed < 0:
                    raise MissionError(s, "speed_bound", f"vehicle {i} speed {nv.speed!r}")
                turn = abs((nv.heading - old.heading + 180.0) % 360.0 - 180.0)
                if turn > cfg.turn_rate_max * cfg.dt + 1e-9:
                    raise MissionError(s, "turn_rate", f"vehicle {i} turned {turn!r} deg")
                if nv.kappa < old.kappa:
                    raise MissionError(s, "battery_monotone", f"vehicle {i} kappa decreased")
            if nv.disabled and not old.disabled:
                world.log("vehicle_disabled", vehicle=i)
            world.vehicles[i] = nv
        world.t = (s + 1) * cfg.dt
        pack.advance(world)
        if s % record_every == 0 or s == n_steps - 1:
            for i, v in enumerate(world.vehicles):
                bundle.rows.append([round(world.t, 6), i, v.x, v.y, v.heading, v.speed, v.kappa,
                                    *world.z[i], world.u[i], pack.options[v.option], *refs[i]])
    bundle.events = world.events
    bundle.metrics = pack.metrics(world)
    bundle.world = world
    return bundle
