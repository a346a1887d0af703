"""Three-versus-three capture the flag.

The blue team allocates itself between attacking and defending through a
two-option dissensus: the average input sets how many agents attack and
the zero-sum part of the input picks which ones. The red team is a
scripted fixed-role opponent: one attacker on a straight flag run and two
stationary defenders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import ivp
from ..netgraph import adjacency_and_laplacian, complete_graph
from ..nod import AgentParams, homogeneous_tensor, integrate, project_zero_sum, tensor_lambda_max
from ..simworld import ScenarioPack, VehicleState, World, heading_to
from .assignment import hungarian

ATTACK, DEFEND = 0, 1
OPTIONS = ("attack", "defend")
TEAM_SIZE = 3


@dataclass
class GameState:
    positions: np.ndarray           # (3, 2) own team
    enemy_flag: tuple
    own_flag: tuple
    own_flag_taken: bool = False
    carrying: bool = False
    threat: bool = False            # an untagged opponent is inside our half


def default_f_ave(state: GameState, cfg: "CtfConfig") -> float:
    if state.own_flag_taken:
        return cfg.f_ave_defend
    if state.threat:
        return cfg.f_ave_threat
    return cfg.f_ave_base


def best_attacker(state: GameState, cfg: "CtfConfig") -> np.ndarray:
    """Unit vector in the zero-sum subspace pointing at the agent nearest the enemy flag."""
    d = np.linalg.norm(np.asarray(state.positions) - np.asarray(state.enemy_flag), axis=1)
    e = np.zeros(len(d))
    e[int(np.argmin(d))] = 1.0
    w = e - e.mean()
    return w / np.linalg.norm(w)


@dataclass
class CtfConfig:
    x_half: float = 80.0
    y_half: float = 40.0
    blue_flag: tuple = (-60.0, 0.0)
    red_flag: tuple = (60.0, 0.0)
    tag_radius: float = 10.0
    grab_radius: float = 10.0
    f_ave_base: float = 6.0
    f_ave_threat: float = -1.0
    f_ave_defend: float = -25.0
    f_ave_schedule: Callable = default_f_ave
    f_net_direction: Callable = best_attacker
    d: float = 1.0
    alpha: float = 0.0
    gamma: float = -1.0
    u_factor: float = 1.2
    w_distance: float = 1.0
    w_heading: float = 0.2
    lead_base: float = 10.0
    avoid_range: float = 35.0
    threat_line: float = -30.0      # an opponent west of this x counts as a threat
    grab_points: float = 0.5
    capture_points: float = 1.0


def ctf_inputs(state: GameState, cfg: CtfConfig) -> np.ndarray:
    """Per-agent (f_attack, f_defend) with average input f_ave and ||f_net|| = |f_ave|."""
    pos = np.asarray(state.positions, dtype=float).reshape(-1, 2)
    if pos.shape[0] != TEAM_SIZE:
        raise ValueError(f"capture the flag teams have {TEAM_SIZE} agents")
    f_ave = float(cfg.f_ave_schedule(state, cfg))
    w = np.asarray(cfg.f_net_direction(state, cfg), dtype=float)
    f = f_ave + abs(f_ave) * w
    return np.column_stack([f / 2.0, -f / 2.0])


def ctf_tensor(cfg: CtfConfig, adjacency=None):
    a = adjacency_and_laplacian(complete_graph(TEAM_SIZE))[0] if adjacency is None else adjacency
    return homogeneous_tensor(a, 2, self_same=cfg.alpha, same=cfg.gamma)


def ctf_attention(cfg: CtfConfig) -> float:
    return cfg.u_factor * cfg.d / tensor_lambda_max(ctf_tensor(cfg))


def settle_roles(b, cfg: CtfConfig, seed: int = 0, dt: float = 0.05, steps: int = 2000,
                 nod: bool = True) -> np.ndarray:
    """Settled opinions of the blue team for inputs ``b``; returns z of shape (3, 2)."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    tensor = ctf_tensor(cfg)
    if not nod:
        tensor = homogeneous_tensor(np.zeros((n, n)), 2)
    z0 = project_zero_sum(np.random.default_rng(seed).normal(0.0, 0.01, b.shape))
    params = AgentParams(np.full(n, cfg.d), np.full(n, ctf_attention(cfg)), b)
    return integrate(z0, params, tensor, dt=dt, steps=steps, record_every=steps).final


def attacker_count(z) -> int:
    return int(np.sum(np.argmax(z, axis=-1) == ATTACK))


@dataclass(frozen=True)
class DefenderTask:
    defender: int
    intruder: int
    rank: int


def _heading_gap(h, bearing):
    d = abs((h - bearing) % 360.0)
    return min(d, 360.0 - d)


def defender_assignment(defenders, intruders, w_distance: float = 1.0, w_heading: float = 0.2) -> list[DefenderTask]:
    """Match defenders to intruders by distance and heading change; surplus defenders back up the nearest one.

    ``defenders`` and ``intruders`` are rows of (x, y, heading). The matched
    defender of an intruder has rank 0; backups get increasing ranks in
    order of distance.
    """
    dfn = np.asarray(defenders, dtype=float).reshape(-1, 3)
    itr = np.asarray(intruders, dtype=float).reshape(-1, 3)
    if dfn.shape[0] == 0:
        raise ValueError("need at least one defender")
    if itr.shape[0] == 0:
        return []
    cost = np.zeros((dfn.shape[0], itr.shape[0]))
    dist = np.zeros_like(cost)
    for i, (x, y, h) in enumerate(dfn):
        for j, (ix, iy, _) in enumerate(itr):
            dist[i, j] = math.hypot(ix - x, iy - y)
            cost[i, j] = w_distance * dist[i, j] + w_heading * _heading_gap(h, heading_to(ix - x, iy - y))
    m = hungarian(cost)
    tasks = [DefenderTask(int(r), int(c), 0) for r, c in zip(m.rows, m.cols)]
    matched = set(m.rows)
    surplus = sorted((i for i in range(dfn.shape[0]) if i not in matched),
                     key=lambda i: (float(np.min(dist[i])), i))
    load = {t.intruder: 1 for t in tasks}
    for i in surplus:
        j = int(np.argmin(dist[i]))
        tasks.append(DefenderTask(i, j, load.get(j, 0)))
        load[j] = load.get(j, 0) + 1
    return sorted(tasks, key=lambda t: t.defender)


def intercept_point(intruder, rank: int, lead_base: float = 10.0) -> np.ndarray:
    """Point ``lead_base * (rank + 1)`` ahead of the intruder along its heading."""
    if rank < 0:
        raise ValueError("rank must be nonnegative")
    x, y, h = (float(v) for v in intruder)
    lead = lead_base * (rank + 1)
    r = math.radians(h)
    return np.array([x + lead * math.sin(r), y + lead * math.cos(r)])


# -- world pack ------------------------------------------------------------

class CtfPack(ScenarioPack):
    """Blue (vehicles 0-2) runs the opinion model; red (3-5) is scripted.

    ``nod_enabled=False`` zeroes the blue team's social influence (the
    ablated team keeps its inputs and behaviors).
    """

    name = "ctf"
    options = OPTIONS

    def __init__(self, cfg: CtfConfig | None = None, nod_enabled: bool = True):
        self.cfg = cfg or CtfConfig()
        self.nod_enabled = nod_enabled
        self.d = self.cfg.d
        self.u = ctf_attention(self.cfg)

    def setup(self, world: World) -> None:
        cfg = self.cfg
        rng = world.stream("ctf.setup")
        bf, rf = np.asarray(cfg.blue_flag), np.asarray(cfg.red_flag)
        for k in range(TEAM_SIZE):
            p = bf + np.array([10.0, (k - 1) * 20.0]) + rng.uniform(-5, 5, 2)
            world.vehicles.append(VehicleState(float(p[0]), float(p[1]), heading=90.0, team="blue", option=DEFEND))
        p = rf + np.array([-10.0, 0.0]) + rng.uniform(-5, 5, 2)
        world.vehicles.append(VehicleState(float(p[0]), float(p[1]), heading=270.0, team="red", option=ATTACK))
        self.red_guards = []
        for s in (-1, 1):
            g = rf + np.array([-15.0, s * 15.0]) + rng.uniform(-5, 5, 2)
            self.red_guards.append(g)
            world.vehicles.append(VehicleState(float(g[0]), float(g[1]), heading=270.0, team="red", option=DEFEND))
        world.z = np.zeros((6, 2))
        world.z[:TEAM_SIZE] = project_zero_sum(rng.normal(0.0, 0.01, (TEAM_SIZE, 2)))
        world.env.update(tagged=[False] * 6, carrier={"blue": None, "red": None},
                         score={"blue": 0.0, "red": 0.0}, grabs={"blue": 0, "red": 0},
                         captures={"blue": 0, "red": 0}, tags={"blue": 0, "red": 0})

    def influence_adjacency(self, world):
        a = adjacency_and_laplacian(world.graph)[0].copy()
        a[TEAM_SIZE:, :] = 0.0
        a[:, TEAM_SIZE:] = 0.0
        return a

    def coupling(self, world):
        cfg = self.cfg
        return np.diag([cfg.alpha] * 2), np.diag([cfg.gamma] * 2)

    def _game_state(self, world) -> GameState:
        cfg = self.cfg
        return GameState(world.positions()[:TEAM_SIZE], cfg.red_flag, cfg.blue_flag,
                         own_flag_taken=world.env["carrier"]["red"] is not None,
                         carrying=world.env["carrier"]["blue"] is not None,
                         threat=any(not world.env["tagged"][k] and world.vehicles[k].x < self.cfg.threat_line
                                    for k in range(TEAM_SIZE, 2 * TEAM_SIZE)))

    def inputs(self, world):
        b = np.zeros((6, 2))
        b[:TEAM_SIZE] = ctf_inputs(self._game_state(world), self.cfg)
        return b

    def select_options(self, world):
        chosen = super().select_options(world)
        return chosen[:TEAM_SIZE] + [ATTACK, DEFEND, DEFEND]

    def _home(self, team):
        return np.asarray(self.cfg.blue_flag if team == "blue" else self.cfg.red_flag)

    def _in_home_half(self, team, pos):
        return pos[0] < 0 if team == "blue" else pos[0] > 0

    def behaviors(self, world, i):
        cfg = self.cfg
        env = world.env
        v = world.vehicles[i]
        vmax = world.cfg.v_max
        if env["tagged"][i] or env["carrier"][v.team] == i:
            return [_goto(v, self._home(v.team), vmax)]
        if v.team == "red":
            if i == TEAM_SIZE:
                return [_goto(v, np.asarray(cfg.blue_flag), vmax)]
            g = self.red_guards[i - TEAM_SIZE - 1]
            dist = float(np.linalg.norm(g - v.pos))
            return [_goto(v, g, min(vmax, dist / 2.0))]
        if v.option == ATTACK:
            foes = [w.pos for k, w in enumerate(world.vehicles)
                    if w.team == "red" and not env["tagged"][k] and self._in_home_half("red", w.pos)]
            return [_goto(v, np.asarray(cfg.red_flag), vmax), _avoid(v, foes, cfg.avoid_range)]
        # defend: intercept red vehicles heading into our half, otherwise guard the flag
        defenders = [k for k in range(TEAM_SIZE) if world.vehicles[k].option == DEFEND and not env["tagged"][k]]
        intruders = [k for k in range(TEAM_SIZE, 6) if not env["tagged"][k] and world.vehicles[k].x < 20.0]
        if intruders and i in defenders:
            rows = [(world.vehicles[k].x, world.vehicles[k].y, world.vehicles[k].heading) for k in defenders]
            itr = [(world.vehicles[k].x, world.vehicles[k].y, world.vehicles[k].heading) for k in intruders]
            for t in defender_assignment(rows, itr, cfg.w_distance, cfg.w_heading):
                if defenders[t.defender] == i:
                    goal = intercept_point(itr[t.intruder], t.rank, cfg.lead_base)
                    return [_goto(v, goal, vmax)]
        guard = np.asarray(cfg.blue_flag) + np.array([15.0, 0.0])
        dist = float(np.linalg.norm(guard - v.pos))
        return [_goto(v, guard, min(vmax, dist / 2.0))]

    def advance(self, world):
        cfg = self.cfg
        env = world.env
        vs = world.vehicles
        pos = world.positions()
        for i, v in enumerate(vs):
            if env["tagged"][i] and np.linalg.norm(pos[i] - self._home(v.team)) <= cfg.grab_radius:
                env["tagged"][i] = False
                world.log("untagged", vehicle=i)
        # leaving the field counts as a tag
        for i, v in enumerate(vs):
            if not env["tagged"][i] and (abs(v.x) > cfg.x_half or abs(v.y) > cfg.y_half):
                env["tagged"][i] = True
                if env["carrier"][v.team] == i:
                    env["carrier"][v.team] = None
                    world.log("flag_dropped", vehicle=i, team=v.team)
                world.log("out_of_bounds", vehicle=i)
        # tagging happens in the defender's half
        for i, v in enumerate(vs):
            if env["tagged"][i]:
                continue
            other = "red" if v.team == "blue" else "blue"
            if not self._in_home_half(other, pos[i]):
                continue
            for k, w in enumerate(vs):
                if w.team == other and not env["tagged"][k] and self._in_home_half(other, pos[k]) \
                        and np.linalg.norm(pos[i] - pos[k]) <= cfg.tag_radius:
                    env["tagged"][i] = True
                    env["tags"][other] += 1
                    if env["carrier"][v.team] == i:
                        env["carrier"][v.team] = None
                        world.log("flag_dropped", vehicle=i, team=v.team)
                    world.log("tagged", vehicle=i, by=k)
                    break
        for i, v in enumerate(vs):
            if env["tagged"][i]:
                continue
            other = "red" if v.team == "blue" else "blue"
            if env["carrier"][v.team] is None and np.linalg.norm(pos[i] - self._home(other)) <= cfg.grab_radius:
                env["carrier"][v.team] = i
                env["grabs"][v.team] += 1
                env["score"][v.team] += cfg.grab_points
                world.log("flag_grabbed", vehicle=i, team=v.team)
            elif env["carrier"][v.team] == i and np.linalg.norm(pos[i] - self._home(v.team)) <= cfg.grab_radius:
                env["carrier"][v.team] = None
                env["captures"][v.team] += 1
                env["score"][v.team] += cfg.capture_points
                world.log("flag_captured", vehicle=i, team=v.team)

    def metrics(self, world):
        env = world.env
        s = env["score"]
        return {
            "scenario": "ctf",
            "nod_enabled": self.nod_enabled,
            "score": dict(s),
            "net_score": s["blue"] - s["red"],
            "grabs": dict(env["grabs"]),
            "captures": dict(env["captures"]),
            "tags": dict(env["tags"]),
            "win": s["blue"] > s["red"],
            "tie": s["blue"] == s["red"],
        }


def _goto(v: VehicleState, goal, speed: float) -> ivp.Behavior:
    rel = np.asarray(goal, dtype=float) - v.pos
    h = heading_to(*rel) if np.linalg.norm(rel) > 1e-9 else v.heading

    def f(hh, ss):
        return ivp.heading_utility(h, 180.0)(hh) - 20.0 * np.abs(ss - speed)
    return ivp.Behavior("goto", f)


def _avoid(v: VehicleState, foes, rng_m: float) -> ivp.Behavior:
    """Penalize headings pointing at nearby opponents, more strongly when close."""
    near = [(heading_to(*(np.asarray(p) - v.pos)), float(np.linalg.norm(np.asarray(p) - v.pos))) for p in foes]
    near = [(b, d) for b, d in near if d < rng_m]

    def f(hh, ss):
        out = np.zeros(np.broadcast(hh, ss).shape)
        for b, d in near:
            gap = ivp.circular_diff(hh, b)
            out = out - 150.0 * (1.0 - d / rng_m) * np.maximum(0.0, 1.0 - gap / 60.0)
        return out
    return ivp.Behavior("avoid", f, weight=1.0)
