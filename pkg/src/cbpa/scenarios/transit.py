"""Minimal mission: vehicles steer to fixed waypoints with no opinion coupling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import ivp
from ..simworld import ScenarioPack, VehicleState, World, heading_to


@dataclass
class TransitConfig:
    n_vehicles: int = 1
    spacing: float = 20.0
    waypoint: tuple = (0.0, 100.0)
    speed: float = 2.0
    battery_rate: float = 0.0

    def __post_init__(self):
        if self.n_vehicles < 1:
            raise ValueError("n_vehicles must be at least 1")


class TransitPack(ScenarioPack):
    name = "transit"
    options = ("transit",)

    def __init__(self, cfg: TransitConfig | None = None):
        self.cfg = cfg or TransitConfig()

    def setup(self, world: World) -> None:
        for i in range(self.cfg.n_vehicles):
            world.vehicles.append(VehicleState(i * self.cfg.spacing, 0.0))

    def behaviors(self, world, i):
        v = world.vehicles[i]
        rel = np.asarray(self.cfg.waypoint, dtype=float) - v.pos
        h = heading_to(*rel) if np.linalg.norm(rel) > 1e-9 else v.heading
        speed = min(self.cfg.speed, float(np.linalg.norm(rel)))

        def f(hh, ss):
            return ivp.heading_utility(h, 180.0)(hh) - 20.0 * np.abs(ss - speed)
        return [ivp.Behavior("waypoint", f)]

    def battery_rate(self, world, i):
        return self.cfg.battery_rate

    def metrics(self, world):
        wp = np.asarray(self.cfg.waypoint, dtype=float)
        dist = [float(np.linalg.norm(v.pos - wp)) for v in world.vehicles]
        return {"scenario": "transit", "final_distance": dist, "mean_final_distance": float(np.mean(dist))}
