"""Adaptive seek-and-sample with migration between two zones.

Each vehicle keeps its own belief grid over a scalar field phi. Blooms
(hot spots) appear at random inside the active zone and grow outward;
detecting one reveals its sample locations. Agents split between
searching and sampling according to the marginal value each option adds,
and a migration signal cascades through the fleet via attention feedback.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import ivp
from ..netgraph import adjacency_and_laplacian, path_graph
from ..nod import (AdjacencyTensor, AgentParams, AttentionState, critical_attention, integrate,
                   project_zero_sum, tensor_lambda_max)
from ..simworld import ScenarioPack, VehicleState, World, heading_to
from .assignment import fleet_tsp
from .geometry import assign_nearest, points_in_polygon, rect

SEARCH, SAMPLE, MIGRATE = 0, 1, 2
OPTIONS = ("search", "sample", "migrate")
PHI_PRIOR = 0.5
VAR_MAX = 0.25 ** 2
NEIGHBOR_VAR = 0.1 ** 2


@dataclass
class GridBelief:
    """Per-cell mean and variance of phi on a regular grid."""

    origin: tuple
    resolution: float
    shape: tuple
    mean: np.ndarray = None
    var: np.ndarray = None
    last_update: np.ndarray = None
    decay_tau: float = 300.0

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.full(self.shape, PHI_PRIOR)
        if self.var is None:
            self.var = np.full(self.shape, VAR_MAX)
        if self.last_update is None:
            self.last_update = np.zeros(self.shape)

    def cell_of(self, pos) -> tuple:
        p = (np.asarray(pos, dtype=float) - np.asarray(self.origin)) / self.resolution
        i = int(min(max(math.floor(p[0]), 0), self.shape[0] - 1))
        j = int(min(max(math.floor(p[1]), 0), self.shape[1] - 1))
        return i, j

    def contains(self, pos) -> bool:
        p = (np.asarray(pos, dtype=float) - np.asarray(self.origin)) / self.resolution
        return 0 <= p[0] < self.shape[0] and 0 <= p[1] < self.shape[1]

    def centers(self) -> np.ndarray:
        ii, jj = np.meshgrid(np.arange(self.shape[0]), np.arange(self.shape[1]), indexing="ij")
        return np.stack([self.origin[0] + (ii + 0.5) * self.resolution,
                         self.origin[1] + (jj + 0.5) * self.resolution], axis=-1)

    def copy(self) -> "GridBelief":
        return replace(self, mean=self.mean.copy(), var=self.var.copy(), last_update=self.last_update.copy())


@dataclass
class Observation:
    cell: tuple
    phi: float
    var: float


def grid_update(belief: GridBelief, observations=(), dt: float = 0.0, neighbor_cells=(), t: float | None = None) -> GridBelief:
    """Decay every cell toward the prior, then apply this step's measurements.

    Own observations set a cell to (phi, sensor variance); cells holding a
    neighbour that reported no detection are set to (0.5, 0.1^2).
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    out = belief.copy()
    k = math.exp(-dt / belief.decay_tau) if dt > 0 else 1.0
    out.mean = PHI_PRIOR + (out.mean - PHI_PRIOR) * k
    out.var = VAR_MAX + (out.var - VAR_MAX) * k
    for c in neighbor_cells:
        _check_cell(out, c)
        out.mean[c] = PHI_PRIOR
        out.var[c] = min(out.var[c], NEIGHBOR_VAR)
        if t is not None:
            out.last_update[c] = t
    for ob in observations:
        _check_cell(out, ob.cell)
        out.mean[ob.cell] = min(max(ob.phi, 0.0), 1.0)
        out.var[ob.cell] = min(max(ob.var, 0.0), VAR_MAX)
        if t is not None:
            out.last_update[ob.cell] = t
    return out


def _check_cell(b: GridBelief, c):
    if not (0 <= c[0] < b.shape[0] and 0 <= c[1] < b.shape[1]):
        raise ValueError(f"observation cell {c} outside the grid")


def _cell_steps(agent_cell, cells) -> np.ndarray:
    cells = np.asarray(cells).reshape(-1, 2)
    steps = np.max(np.abs(cells - np.asarray(agent_cell)), axis=1)
    # revisiting the current cell takes a step out and a step back
    return np.where(steps == 0, 2, steps)


def search_value(belief: GridBelief, pos, cells, depth: int = 4, beta: float = 1.0, gamma_t: float = 0.9) -> float:
    """Best discounted upper-confidence reward ``gamma_t^steps (E + beta sqrt(V))`` within ``depth`` moves.

    Moves are to any of the 8 neighbouring cells; ``cells`` is an (n, 2)
    array of grid indices the agent may end in.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    cells = np.asarray(cells, dtype=int).reshape(-1, 2)
    if cells.shape[0] == 0:
        return 0.0
    steps = _cell_steps(belief.cell_of(pos), cells)
    ok = steps <= depth
    if not ok.any():
        return 0.0
    c = cells[ok]
    reward = belief.mean[c[:, 0], c[:, 1]] + beta * np.sqrt(belief.var[c[:, 0], c[:, 1]])
    return float(np.max(gamma_t ** steps[ok] * reward))


def search_target(belief: GridBelief, pos, cells, depth=4, beta=1.0, gamma_t=0.9):
    """Cell center maximizing the search reward, or None if nothing is reachable."""
    cells = np.asarray(cells, dtype=int).reshape(-1, 2)
    if cells.shape[0] == 0:
        return None
    steps = _cell_steps(belief.cell_of(pos), cells)
    reward = belief.mean[cells[:, 0], cells[:, 1]] + beta * np.sqrt(belief.var[cells[:, 0], cells[:, 1]])
    # out-of-depth cells still count, discounted by their distance, so a far agent heads home
    k = int(np.argmax(gamma_t ** np.maximum(steps, 1) * reward))
    c = cells[k]
    return np.array([belief.origin[0] + (c[0] + 0.5) * belief.resolution,
                     belief.origin[1] + (c[1] + 0.5) * belief.resolution])


def search_value_by_paths(belief: GridBelief, pos, cells, depth: int, beta: float = 1.0, gamma_t: float = 0.9) -> float:
    """Exhaustive enumeration over all move sequences of length 1..depth."""
    allowed = {tuple(c) for c in np.asarray(cells, dtype=int).reshape(-1, 2)}
    if not allowed:
        return 0.0
    moves = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    start = belief.cell_of(pos)
    best = 0.0
    for length in range(1, depth + 1):
        for seq in itertools.product(moves, repeat=length):
            i, j = start
            ok = True
            for di, dj in seq:
                i, j = i + di, j + dj
                if not (0 <= i < belief.shape[0] and 0 <= j < belief.shape[1]):
                    ok = False
                    break
            if ok and (i, j) in allowed:
                v = gamma_t ** length * (belief.mean[i, j] + beta * math.sqrt(belief.var[i, j]))
                best = max(best, v)
    return best


def team_search_value(belief: GridBelief, searchers, cells, depth=4, beta=1.0, gamma_t=0.9) -> float:
    """Sum of search values, each searcher restricted to its grid Voronoi cell."""
    searchers = np.asarray(searchers, dtype=float).reshape(-1, 2)
    cells = np.asarray(cells, dtype=int).reshape(-1, 2)
    if searchers.shape[0] == 0 or cells.shape[0] == 0:
        return 0.0
    centers = np.asarray(belief.origin) + (cells + 0.5) * belief.resolution
    owner = assign_nearest(centers, searchers)
    return sum(search_value(belief, searchers[s], cells[owner == s], depth, beta, gamma_t)
               for s in range(searchers.shape[0]))


def search_input(belief: GridBelief, ego_pos, other_searchers, cells, depth=4, beta=1.0, gamma_t=0.9) -> float:
    """Marginal team search value of the ego vehicle joining the searchers."""
    others = np.asarray(other_searchers, dtype=float).reshape(-1, 2)
    with_ego = team_search_value(belief, np.vstack([others, np.reshape(ego_pos, (1, 2))]), cells, depth, beta, gamma_t)
    without = team_search_value(belief, others, cells, depth, beta, gamma_t)
    return with_ego - without


@dataclass
class SampleTaskSet:
    locations: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    bloom: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    claimed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    completed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def add(self, points, bloom_id: int) -> None:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        self.locations = np.vstack([self.locations, pts])
        self.bloom = np.concatenate([self.bloom, np.full(pts.shape[0], bloom_id)])
        self.claimed = np.concatenate([self.claimed, np.zeros(pts.shape[0], dtype=bool)])
        self.completed = np.concatenate([self.completed, np.zeros(pts.shape[0], dtype=bool)])

    def complete(self, k: int) -> None:
        self.claimed[k] = True
        self.completed[k] = True

    def pending(self) -> np.ndarray:
        return np.flatnonzero(~self.completed)

    def __len__(self):
        return self.locations.shape[0]


def sample_input(task_locations, ego_pos, other_samplers, others=None, lone_cost: float = 500.0,
                 **cost_kw) -> float:
    """Fleet-TSP cost saved by the ego vehicle joining the samplers.

    Without the ego, the tasks fall to the other samplers; if there are
    none, to the nearest other vehicles in ``others``; if the ego is alone,
    each unattended task costs ``lone_cost``. ``cost_kw`` selects the
    :func:`fleet_tsp` objective.
    """
    tasks = np.asarray(task_locations, dtype=float).reshape(-1, 2)
    if tasks.shape[0] == 0:
        return 0.0
    samplers = np.asarray(other_samplers, dtype=float).reshape(-1, 2)
    fallback = samplers if samplers.shape[0] else np.asarray(others if others is not None else [], dtype=float).reshape(-1, 2)
    with_ego, _ = fleet_tsp(np.vstack([samplers, np.reshape(ego_pos, (1, 2))]), tasks, **cost_kw)
    if fallback.shape[0] == 0:
        return max(lone_cost * tasks.shape[0] - with_ego, 0.0)
    if not samplers.shape[0]:
        with_ego = min(with_ego, fleet_tsp(np.vstack([fallback, np.reshape(ego_pos, (1, 2))]), tasks, **cost_kw)[0])
    without, _ = fleet_tsp(fallback, tasks, **cost_kw)
    return max(without - with_ego, 0.0)


def migrate_input(detected: bool, b_mig: float = 2.0) -> float:
    return b_mig if detected else 0.0


@dataclass
class CascadeResult:
    migrate_count: int
    final_z: np.ndarray
    final_u: np.ndarray
    trajectory: object


def migration_cascade(n: int = 8, attention: bool = True, b_search: float = 0.3, b_mig: float = 2.0,
                      self_same: float = 0.2, split: float = -0.1, migrate_coupling: float = 1.0,
                      u_lo_factor: float = 0.5, u_hi_factor: float = 3.0, tau_u: float = 2.0, c: float = 0.5,
                      duration: float = 200.0, dt: float = 0.05, detector: int = 0) -> CascadeResult:
    """Chain of ``n`` agents, one of which detects the migration signal.

    Attention bounds are given relative to the critical attention of the
    chain. ``attention=False`` holds every agent at ``u_lo``.
    """
    a, _ = adjacency_and_laplacian(path_graph(n))
    tensor = AdjacencyTensor.from_option_matrices(np.diag([self_same] * 3),
                                                  np.diag([split, split, migrate_coupling]), a)
    u_star = critical_attention(1.0, tensor_lambda_max(tensor))
    u_lo, u_hi = u_lo_factor * u_star, u_hi_factor * u_star
    b = np.zeros((n, 3))
    b[:, SEARCH] = b_search
    b[detector, MIGRATE] = migrate_input(True, b_mig)
    params = AgentParams(np.ones(n), np.full(n, u_lo), b)
    att = AttentionState.for_graph(a, tau_u, u_lo, u_hi, c=c) if attention else None
    steps = int(round(duration / dt))
    traj = integrate(np.zeros((n, 3)), params, tensor, att=att, dt=dt, steps=steps, record_every=max(steps // 200, 1))
    z = traj.final
    u = traj.u[-1] if traj.u is not None else np.full(n, u_lo)
    return CascadeResult(int(np.sum(np.argmax(z, axis=1) == MIGRATE)), z, u, traj)


# -- world pack ------------------------------------------------------------

@dataclass
class SeekSampleConfig:
    n_vehicles: int = 8
    zone_w: float = 150.0
    zone_h: float = 175.0
    zone_gap: float = 100.0
    resolution: float = 10.0
    depth: int = 4
    beta: float = 1.0
    gamma_t: float = 0.9
    decay_tau: float = 300.0
    sensor_radius: float = 10.0
    sensor_var: float = 0.01
    bloom_interval: float = 90.0
    bloom_lifetime: float = 360.0
    bloom_radius: float = 25.0
    samples_per_bloom: int = 5
    sample_offset: float = 12.0
    sample_radius: float = 4.0
    sample_time: float = 30.0
    migrate_time: float = 900.0
    b_mig: float = 2.0
    eta10: float = 0.5
    eta11: float = 0.04
    eta12: float = -0.1
    commit: float = 0.6
    decision_period: float = 5.0
    lone_cost: float = 120.0
    sample_cost: str = "completion_time"
    self_same: float = 0.2
    split: float = -0.1
    migrate_coupling: float = 1.0
    d: float = 1.0
    tau_u: float = 2.0
    u_lo: float = 0.1
    u_hi: float = 0.45
    c: float = 1.0
    search_speed: float = 2.0

    def zones(self) -> list[np.ndarray]:
        x1 = self.zone_w + self.zone_gap
        return [rect(0.0, 0.0, self.zone_w, self.zone_h), rect(x1, 0.0, x1 + self.zone_w, self.zone_h)]


@dataclass
class Bloom:
    center: np.ndarray
    born: float
    zone: int
    points: np.ndarray
    detected: bool = False
    owner: int | None = None


class SeekSamplePack(ScenarioPack):
    """Two-zone seek-and-sample mission.

    ``allocation=False`` is the ablation: every vehicle searches, and a
    vehicle that detects a bloom samples that bloom itself.
    """

    name = "seek_sample"
    options = OPTIONS

    def __init__(self, cfg: SeekSampleConfig | None = None, allocation: bool = True):
        self.cfg = cfg or SeekSampleConfig()
        self.allocation = allocation
        self.d = self.cfg.d
        self.attention = {"tau_u": self.cfg.tau_u, "u_lo": self.cfg.u_lo, "u_hi": self.cfg.u_hi, "c": self.cfg.c}

    # setup -----------------------------------------------------------------
    def setup(self, world: World) -> None:
        cfg = self.cfg
        rng = world.stream("seek_sample.setup")
        zones = cfg.zones()
        x_max = zones[1][:, 0].max()
        shape = (int(round(x_max / cfg.resolution)), int(round(cfg.zone_h / cfg.resolution)))
        base = GridBelief((0.0, 0.0), cfg.resolution, shape, decay_tau=cfg.decay_tau)
        centers = base.centers().reshape(-1, 2)
        self.zone_cells = []
        for z in zones:
            inside = points_in_polygon(centers, z)
            idx = np.argwhere(inside.reshape(shape))
            self.zone_cells.append(idx)
        self.beliefs = [base.copy() for _ in range(cfg.n_vehicles)]
        for i in range(cfg.n_vehicles):
            x = rng.uniform(10.0, cfg.zone_w - 10.0)
            y = rng.uniform(10.0, 40.0)
            world.vehicles.append(VehicleState(x, y, heading=0.0, option=SEARCH))
        world.z = project_zero_sum(rng.normal(0.0, 0.01, (cfg.n_vehicles, 3)))
        env = world.env
        env["zone"] = [0] * cfg.n_vehicles          # zone each vehicle works in
        env["active_zone"] = 0
        env["blooms"] = []
        env["tasks"] = SampleTaskSet()
        env["dwell"] = np.zeros(0)
        env["targets"] = [None] * cfg.n_vehicles
        env["claims"] = {}
        env["signal"] = [False] * cfg.n_vehicles
        env["arrived"] = [False] * cfg.n_vehicles
        env["b"] = np.zeros((cfg.n_vehicles, 3))
        env["next_bloom"] = float(world.stream("seek_sample.blooms").exponential(cfg.bloom_interval))
        env["migrated"] = False
        self.bloom_rng = world.stream("seek_sample.blooms")
        self.signal_rng = world.stream("seek_sample.signal")

    def coupling(self, world):
        cfg = self.cfg
        self_block = np.diag([cfg.self_same] * 3)
        edge_block = np.diag([cfg.split, cfg.split, cfg.migrate_coupling])
        return self_block, edge_block

    # inputs ----------------------------------------------------------------
    def _neighbors(self, world, i):
        return [k for k in world.graph.neighbors(i) if not world.vehicles[k].disabled]

    def inputs(self, world):
        cfg = self.cfg
        env = world.env
        period = max(int(round(cfg.decision_period / world.cfg.dt)), 1)
        tasks = env["tasks"]
        pend = tasks.locations[tasks.pending()]
        b = env["b"]
        for i, v in enumerate(world.vehicles):
            # agents re-evaluate on staggered ticks rather than all at once
            if v.disabled or (world.step_index + i) % period:
                continue
            nb = self._neighbors(world, i)
            zone = env["zone"][i]
            searchers = [world.vehicles[k].pos for k in nb
                         if world.vehicles[k].option == SEARCH and env["zone"][k] == zone]
            samplers = [world.vehicles[k].pos for k in nb if world.vehicles[k].option == SAMPLE]
            f_search = search_input(self.beliefs[i], v.pos, searchers, self.zone_cells[zone],
                                    cfg.depth, cfg.beta, cfg.gamma_t)
            # with no sampler around, the tasks are unattended and cost lone_cost
            f_sample = sample_input(pend, v.pos, samplers, None, cfg.lone_cost, **self._cost_kw(world))
            b[i, SEARCH] = cfg.eta10 * f_search
            b[i, SAMPLE] = cfg.eta11 * f_sample + cfg.eta12
            if v.option == SAMPLE and i in env["claims"]:
                # commitment to a claimed task damps synchronous flip-flopping
                b[i, SAMPLE] += cfg.commit
        out = b.copy()
        for i in range(world.n):
            if env["signal"][i] and not env["arrived"][i]:
                out[i, MIGRATE] = migrate_input(True, cfg.b_mig)
            elif env["arrived"][i]:
                out[i, MIGRATE] = -cfg.b_mig
        return out

    def _cost_kw(self, world):
        if self.cfg.sample_cost == "distance":
            return {}
        return {"objective": "completion_time", "speed": world.cfg.v_max, "service": self.cfg.sample_time}

    def select_options(self, world):
        chosen = super().select_options(world)
        if self.allocation:
            return chosen
        env = world.env
        tasks = env["tasks"]
        out = []
        for i, c in enumerate(chosen):
            if c == MIGRATE:
                out.append(MIGRATE)
                continue
            mine = [k for k in tasks.pending() if env["blooms"][tasks.bloom[k]].owner == i]
            out.append(SAMPLE if mine else SEARCH)
        return out

    # behaviors ---------------------------------------------------------------
    def _assign_samplers(self, world):
        """Keep existing claims until their task completes; match free samplers to unclaimed tasks."""
        env = world.env
        tasks = env["tasks"]
        pend = set(int(k) for k in tasks.pending())
        claims = env["claims"]
        for i in list(claims):
            if claims[i] not in pend or world.vehicles[i].option != SAMPLE or world.vehicles[i].disabled:
                del claims[i]
        if self.allocation:
            free = [i for i, v in enumerate(world.vehicles)
                    if v.option == SAMPLE and not v.disabled and i not in claims]
            open_tasks = sorted(pend - set(claims.values()))
            if free and open_tasks:
                _, first = fleet_tsp(world.positions()[free], tasks.locations[open_tasks], **self._cost_kw(world))
                for r, t in first.items():
                    claims[free[r]] = open_tasks[t]
        else:
            for i, v in enumerate(world.vehicles):
                if v.option != SAMPLE or i in claims:
                    continue
                mine = [k for k in sorted(pend) if env["blooms"][tasks.bloom[k]].owner == i]
                if mine:
                    d = np.linalg.norm(tasks.locations[mine] - v.pos, axis=1)
                    claims[i] = int(mine[int(np.argmin(d))])
        env["targets"] = [claims.get(i) for i in range(world.n)]

    def behaviors(self, world, i):
        cfg = self.cfg
        env = world.env
        if i == 0:
            self._assign_samplers(world)
        v = world.vehicles[i]
        if v.option == MIGRATE:
            zone = cfg.zones()[1 - env["zone"][i]] if not env["arrived"][i] else cfg.zones()[env["zone"][i]]
            goal = zone.mean(axis=0)
            return [_goto(v, goal, world.cfg.v_max)]
        if v.option == SAMPLE and env["targets"][i] is not None:
            goal = env["tasks"].locations[env["targets"][i]]
            dist = float(np.linalg.norm(goal - v.pos))
            return [_goto(v, goal, min(world.cfg.v_max, dist / (2.0 * world.cfg.dt)))]
        # search, or a sampler with nothing to do
        zone = env["zone"][i]
        searchers = [k for k, w in enumerate(world.vehicles)
                     if not w.disabled and env["zone"][k] == zone and (w.option == SEARCH or k == i)]
        cells = self.zone_cells[zone]
        centers = np.asarray(self.beliefs[i].origin) + (cells + 0.5) * cfg.resolution
        owner = assign_nearest(centers, world.positions()[searchers])
        mine = cells[owner == searchers.index(i)]
        goal = search_target(self.beliefs[i], v.pos, mine, cfg.depth, cfg.beta, cfg.gamma_t)
        if goal is None:
            goal = cfg.zones()[zone].mean(axis=0)
        return [_goto(v, goal, cfg.search_speed)]

    def battery_rate(self, world, i):
        return 0.0

    # environment -------------------------------------------------------------
    def _bloom_radius(self, bloom, t):
        age = t - bloom.born
        return self.cfg.bloom_radius * min(max(age / self.cfg.bloom_lifetime, 0.0), 1.0)

    def _alive(self, bloom, t):
        return t - bloom.born < self.cfg.bloom_lifetime and bloom.zone == self._bloom_zone(t)

    def _bloom_zone(self, t):
        return 0 if t < self.cfg.migrate_time else 1

    def advance(self, world):
        cfg = self.cfg
        env = world.env
        t = world.t
        # spawn blooms in the zone not covered by the storm
        while env["next_bloom"] <= t:
            zone = self._bloom_zone(env["next_bloom"])
            z = cfg.zones()[zone]
            lo, hi = z.min(axis=0) + cfg.bloom_radius, z.max(axis=0) - cfg.bloom_radius
            c = self.bloom_rng.uniform(lo, hi)
            ang = self.bloom_rng.uniform(0, 2 * math.pi) + np.arange(cfg.samples_per_bloom - 1) * 2 * math.pi / max(cfg.samples_per_bloom - 1, 1)
            pts = np.vstack([c, c + cfg.sample_offset * np.column_stack([np.sin(ang), np.cos(ang)])])
            env["blooms"].append(Bloom(c, env["next_bloom"], zone, pts))
            world.log("bloom_spawned", bloom=len(env["blooms"]) - 1, center=[float(c[0]), float(c[1])])
            env["next_bloom"] += float(self.bloom_rng.exponential(cfg.bloom_interval))
        # storm: the migration signal reaches one vehicle
        if not env["migrated"] and t >= cfg.migrate_time:
            env["migrated"] = True
            active = [i for i, v in enumerate(world.vehicles) if not v.disabled]
            k = int(self.signal_rng.choice(active))
            env["signal"][k] = True
            world.log("migration_signal", vehicle=k)
        tasks = env["tasks"]
        for i, v in enumerate(world.vehicles):
            if v.disabled:
                continue
            if v.option == MIGRATE and env["migrated"] and not env["signal"][i]:
                # an agent committed to migrating relays the signal it acted on
                env["signal"][i] = True
                world.log("migration_relayed", vehicle=i)
            if v.option == MIGRATE and not env["arrived"][i]:
                target = 1 - env["zone"][i]
                if points_in_polygon(v.pos[None, :], cfg.zones()[target])[0]:
                    env["zone"][i] = target
                    env["arrived"][i] = True
                    world.log("vehicle_arrived", vehicle=i, zone=target)
        # sensing and belief updates
        positions = world.positions()
        cells = [self.beliefs[0].cell_of(p) for p in positions]
        detections = {}
        for i, v in enumerate(world.vehicles):
            if v.disabled or not self.beliefs[i].contains(v.pos):
                continue
            phi = 0.0
            for bi, bloom in enumerate(env["blooms"]):
                if self._alive(bloom, t) and np.linalg.norm(bloom.center - v.pos) <= self._bloom_radius(bloom, t) + cfg.sensor_radius:
                    phi = 1.0
                    detections.setdefault(i, []).append(bi)
            obs = [Observation(cells[i], phi, cfg.sensor_var)]
            nb_cells = [cells[k] for k in self._neighbors(world, i)
                        if k not in detections and self.beliefs[i].contains(positions[k])]
            self.beliefs[i] = grid_update(self.beliefs[i], obs, world.cfg.dt, nb_cells, t)
        for i, blooms in detections.items():
            for bi in blooms:
                bloom = env["blooms"][bi]
                if not bloom.detected:
                    bloom.detected = True
                    bloom.owner = i
                    tasks.add(bloom.points, bi)
                    env["dwell"] = np.concatenate([env["dwell"], np.zeros(bloom.points.shape[0])])
                    world.log("bloom_detected", bloom=bi, vehicle=i)
                for k in self._neighbors(world, i):
                    self.beliefs[k].mean[cells[i]] = 1.0
        # sampling progress; tasks of vanished blooms are dropped
        for k in tasks.pending():
            bloom = env["blooms"][tasks.bloom[k]]
            if not self._alive(bloom, t):
                tasks.completed[k] = True
                continue
            near = any(v.option == SAMPLE and not v.disabled
                       and np.linalg.norm(v.pos - tasks.locations[k]) <= cfg.sample_radius
                       for v in world.vehicles)
            if near:
                env["dwell"][k] += world.cfg.dt
                if env["dwell"][k] >= cfg.sample_time:
                    tasks.complete(k)
                    world.log("sample_collected", task=int(k), bloom=int(tasks.bloom[k]))

    def metrics(self, world):
        env = world.env
        tasks = env["tasks"]
        blooms = env["blooms"]
        sampled = 0
        for bi in range(len(blooms)):
            idx = np.flatnonzero(tasks.bloom == bi)
            if idx.size and np.all(env["dwell"][idx] >= self.cfg.sample_time):
                sampled += 1
        n = len(blooms)
        return {
            "scenario": "seek_sample",
            "allocation": self.allocation,
            "blooms": n,
            "blooms_detected": sum(b.detected for b in blooms),
            "blooms_sampled": sampled,
            "unsampled_pct": 100.0 * (n - sampled) / n if n else 0.0,
            "migrated": int(sum(env["arrived"])),
        }


def _goto(v: VehicleState, goal, speed: float) -> ivp.Behavior:
    rel = np.asarray(goal, dtype=float) - v.pos
    h = heading_to(*rel) if np.linalg.norm(rel) > 1e-9 else v.heading

    def f(hh, ss):
        return ivp.heading_utility(h, 180.0)(hh) - 20.0 * np.abs(ss - speed)
    return ivp.Behavior("goto", f)
