"""Polygon rasterization and grid Voronoi partitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def polygon_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def points_in_polygon(points, poly) -> np.ndarray:
    """Even-odd ray casting, vectorized over points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    p = np.asarray(poly, dtype=float)
    x, y = pts[:, 0:1], pts[:, 1:2]
    x1, y1 = p[:, 0], p[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    crosses = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    return np.sum(crosses & (x < xint), axis=1) % 2 == 1


def rect(x0, y0, x1, y1) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def regular_polygon(center, radius, sides=16) -> np.ndarray:
    a = np.linspace(0, 2 * np.pi, sides, endpoint=False)
    return np.column_stack([center[0] + radius * np.cos(a), center[1] + radius * np.sin(a)])


def raster_cells(region, resolution: float) -> np.ndarray:
    """Centers of the square cells of side ``resolution`` lying inside ``region``."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    p = np.asarray(region, dtype=float)
    if p.ndim != 2 or p.shape[0] < 3 or abs(polygon_area(p)) < 1e-12:
        raise ValueError("region polygon is degenerate (zero area)")
    lo, hi = p.min(axis=0), p.max(axis=0)
    xs = np.arange(lo[0] + resolution / 2, hi[0], resolution)
    ys = np.arange(lo[1] + resolution / 2, hi[1], resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    inside = points_in_polygon(pts, p)
    if not inside.any():
        raise ValueError("region is smaller than one grid cell")
    return pts[inside]


@dataclass
class VoronoiPartition:
    cells: np.ndarray          # (n_cells, 2) cell centers
    owner: np.ndarray          # (n_cells,) agent index per cell
    centroids: np.ndarray      # (n_agents, 2), nan for agents without cells

    def cells_of(self, i: int) -> np.ndarray:
        return self.cells[self.owner == i]


def assign_nearest(cells, agents) -> np.ndarray:
    """Index of the nearest agent per cell; argmin breaks ties to the lower index."""
    d2 = np.sum((cells[:, None, :] - np.asarray(agents, dtype=float)[None, :, :]) ** 2, axis=-1)
    return np.argmin(d2, axis=1)


def voronoi_partition(agents, region=None, resolution: float = 5.0, cells=None) -> VoronoiPartition:
    """Grid Voronoi partition of ``region`` (or of precomputed cell centers)."""
    agents = np.asarray(agents, dtype=float).reshape(-1, 2)
    if agents.shape[0] == 0:
        raise ValueError("need at least one agent")
    cells = raster_cells(region, resolution) if cells is None else np.asarray(cells, dtype=float)
    owner = assign_nearest(cells, agents)
    cent = np.full(agents.shape, np.nan)
    for i in range(agents.shape[0]):
        mine = cells[owner == i]
        if mine.size:
            cent[i] = mine.mean(axis=0)
    return VoronoiPartition(cells, owner, cent)


def lloyd_step(agents, region, resolution=5.0) -> np.ndarray:
    """Move each agent to its cell centroid (agents without cells stay put)."""
    part = voronoi_partition(agents, region, resolution)
    out = np.array(agents, dtype=float)
    ok = ~np.isnan(part.centroids[:, 0])
    out[ok] = part.centroids[ok]
    return out
