"""Traversal-cost layer built from an occupancy grid.

Occupied cells are lethal (254). Everything within ``robot_radius`` of an
obstacle is inscribed-lethal (253): the vehicle center cannot be there
without the body overlapping the obstacle. Beyond that, cost decays
exponentially out to ``inflation_radius`` and is zero past it. Unknown
cells default to untraversable, which keeps the planner inside explored
space; a config flag flips them to free for exploration experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..geometry import Pose2D
from ..mapping import CellState, OccupancyGrid

FREE_COST = 0
INSCRIBED = 253
LETHAL = 254
UNKNOWN_COST = 255  # marker, >= INSCRIBED so it is never traversable


@dataclass(frozen=True)
class CostmapParams:
    robot_radius: float = 0.3
    inflation_radius: float = 0.55
    cost_decay: float = 3.0  # 1/m, gradient steepness past the inscribed ring
    unknown_traversable: bool = False

    def validate(self) -> list[str]:
        problems = []
        if self.robot_radius <= 0:
            problems.append("costmap.robot_radius must be > 0")
        if self.inflation_radius < self.robot_radius:
            problems.append("costmap.inflation_radius must be >= robot_radius")
        if self.cost_decay <= 0:
            problems.append("costmap.cost_decay must be > 0")
        return problems


@dataclass(frozen=True)
class Costmap:
    """Per-cell traversal cost on the same lattice as the source grid.

    ``cells`` holds 0..254 plus the UNKNOWN_COST marker. ``distances``
    keeps the underlying meters-to-nearest-obstacle field for clearance
    scoring; infinite when the source grid has no occupied cell.
    """

    resolution: float
    width: int
    height: int
    origin: Pose2D
    cells: np.ndarray  # (height, width) uint8
    distances: np.ndarray  # (height, width) float64, meters
    params: CostmapParams = field(default_factory=CostmapParams)

    def cell_index(self, x: float, y: float) -> tuple[int, int] | None:
        """Map-frame point -> (ix, iy) column/row indices, None outside."""
        ix = int(np.floor((x - self.origin.x) / self.resolution))
        iy = int(np.floor((y - self.origin.y) / self.resolution))
        if 0 <= ix < self.width and 0 <= iy < self.height:
            return ix, iy
        return None

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin.x + (ix + 0.5) * self.resolution,
            self.origin.y + (iy + 0.5) * self.resolution,
        )

    def cost_at(self, x: float, y: float) -> int:
        """Cost at a map-frame point; outside the grid counts as unknown."""
        idx = self.cell_index(x, y)
        if idx is None:
            return UNKNOWN_COST
        return int(self.cells[idx[1], idx[0]])

    def distance_at(self, x: float, y: float) -> float:
        idx = self.cell_index(x, y)
        if idx is None:
            return 0.0
        return float(self.distances[idx[1], idx[0]])


def build_costmap(
    occ: OccupancyGrid, params: CostmapParams = CostmapParams()
) -> Costmap:
    """Inflate an occupancy grid into traversal costs.

    Exact Euclidean distance from every cell to the nearest occupied cell
    drives the profile: 254 on obstacles, 253 inside the robot-radius ring,
    round(252 * exp(-decay * (d - robot_radius))) out to the inflation
    radius, zero beyond.
    """
    problems = params.validate()
    if problems:
        raise ValueError("; ".join(problems))
    if occ.cells.size == 0:
        raise ValueError("costmap source grid is empty")

    occupied = occ.cells == int(CellState.OCCUPIED)
    if occupied.any():
        dist = ndimage.distance_transform_edt(~occupied) * occ.resolution
    else:
        dist = np.full(occ.cells.shape, np.inf)

    cost = np.zeros(occ.cells.shape, dtype=np.uint8)
    ring = (dist > params.robot_radius) & (dist <= params.inflation_radius)
    decayed = 252.0 * np.exp(-params.cost_decay * (dist[ring] - params.robot_radius))
    cost[ring] = np.rint(decayed).astype(np.uint8)
    cost[dist <= params.robot_radius] = INSCRIBED
    cost[occupied] = LETHAL
    if not params.unknown_traversable:
        unknown = occ.cells == int(CellState.UNKNOWN)
        cost[unknown & (cost < INSCRIBED)] = UNKNOWN_COST

    return Costmap(
        resolution=occ.resolution,
        width=occ.width,
        height=occ.height,
        origin=occ.origin,
        cells=cost,
        distances=dist,
        params=params,
    )
