"""Grid A* over the costmap.

Step cost from one cell to an 8-neighbor is (1 or sqrt(2)) scaled by
(1 + cost/256) of the destination cell, so the planner trades length
against proximity to obstacles. Accumulated costs are kept as the exact
integer pair (straight, diagonal) of scaled units; the float value
(a + b*sqrt(2)) / 256 is derived from the pair, which makes equal path
costs compare bit-identically and keeps optimality checks exact.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from ..geometry import Pose2D, wrap_angle
from .costmap import INSCRIBED, Costmap

_SQRT2 = math.sqrt(2.0)

# (dx, dy, diagonal) neighbor table, fixed expansion order
_NEIGHBORS = (
    (1, 0, False),
    (-1, 0, False),
    (0, 1, False),
    (0, -1, False),
    (1, 1, True),
    (1, -1, True),
    (-1, 1, True),
    (-1, -1, True),
)


class PlanningError(Exception):
    """Base for global-planner failures."""


class GoalInCollisionError(PlanningError):
    """Goal cell is lethal, inscribed, unknown, or outside the map."""


class StartInCollisionError(PlanningError):
    """Start cell is untraversable; planning cannot begin."""


class NoPathError(PlanningError):
    """Search frontier exhausted without reaching the goal."""


@dataclass(frozen=True)
class Path:
    """Ordered map-frame waypoints plus the accumulated planner cost.

    Cost is in cell-length units (multiply by resolution for meters on a
    cost-free map).
    """

    waypoints: tuple[Pose2D, ...]
    cost: float


def _pair_value(straight: int, diagonal: int) -> float:
    return (straight + diagonal * _SQRT2) / 256.0


def plan_global(cm: Costmap, start: Pose2D, goal: Pose2D) -> Path:
    """Lowest-cost 8-connected path from start to goal cell.

    The heuristic is Euclidean cell distance scaled by the smallest step
    multiplier present in the map, which keeps it admissible, so the
    returned cost is Dijkstra-optimal. Ties in the open list break toward
    the smaller heuristic, then row-major cell order.
    """
    g_idx = cm.cell_index(goal.x, goal.y)
    if g_idx is None or cm.cells[g_idx[1], g_idx[0]] >= INSCRIBED:
        raise GoalInCollisionError(
            f"goal ({goal.x:.2f}, {goal.y:.2f}) is not on traversable cost"
        )
    s_idx = cm.cell_index(start.x, start.y)
    if s_idx is None or cm.cells[s_idx[1], s_idx[0]] >= INSCRIBED:
        raise StartInCollisionError(
            f"start ({start.x:.2f}, {start.y:.2f}) is not on traversable cost"
        )

    cells = cm.cells
    w, h = cm.width, cm.height
    traversable = cells < INSCRIBED
    min_mult = (256.0 + float(cells[traversable].min())) / 256.0

    def heuristic(ix: int, iy: int) -> float:
        return math.hypot(ix - g_idx[0], iy - g_idx[1]) * min_mult

    # g-cost as integer pairs, indexed [iy, ix]
    best_s = np.full((h, w), -1, dtype=np.int64)
    best_d = np.zeros((h, w), dtype=np.int64)
    parent = np.full((h, w), -1, dtype=np.int64)

    sx, sy = s_idx
    best_s[sy, sx] = 0
    open_heap = [(heuristic(sx, sy), heuristic(sx, sy), sy * w + sx, 0, 0)]
    closed = np.zeros((h, w), dtype=bool)

    while open_heap:
        _, _, flat, a, b = heapq.heappop(open_heap)
        iy, ix = divmod(flat, w)
        if closed[iy, ix]:
            continue
        if (a, b) != (int(best_s[iy, ix]), int(best_d[iy, ix])):
            continue  # stale entry
        closed[iy, ix] = True
        if (ix, iy) == g_idx:
            return _reconstruct(cm, parent, s_idx, g_idx, _pair_value(a, b), goal)
        for dx, dy, diag in _NEIGHBORS:
            nx, ny = ix + dx, iy + dy
            if not (0 <= nx < w and 0 <= ny < h):
                continue
            if closed[ny, nx] or not traversable[ny, nx]:
                continue
            step = 256 + int(cells[ny, nx])
            na, nb = (a, b + step) if diag else (a + step, b)
            if best_s[ny, nx] >= 0:
                if _pair_value(na, nb) >= _pair_value(
                    int(best_s[ny, nx]), int(best_d[ny, nx])
                ):
                    continue
            best_s[ny, nx] = na
            best_d[ny, nx] = nb
            parent[ny, nx] = flat
            g_val = _pair_value(na, nb)
            hn = heuristic(nx, ny)
            heapq.heappush(open_heap, (g_val + hn, hn, ny * w + nx, na, nb))

    raise NoPathError(
        f"no path from ({start.x:.2f}, {start.y:.2f}) to ({goal.x:.2f}, {goal.y:.2f})"
    )


def _reconstruct(
    cm: Costmap,
    parent: np.ndarray,
    s_idx: tuple[int, int],
    g_idx: tuple[int, int],
    cost: float,
    goal: Pose2D,
) -> Path:
    chain = [g_idx]
    cur = g_idx
    while cur != s_idx:
        flat = int(parent[cur[1], cur[0]])
        cur = (flat % cm.width, flat // cm.width)
        chain.append(cur)
    chain.reverse()

    points = [cm.cell_center(ix, iy) for ix, iy in chain]
    waypoints = []
    for i, (px, py) in enumerate(points):
        if i + 1 < len(points):
            theta = math.atan2(points[i + 1][1] - py, points[i + 1][0] - px)
        else:
            theta = wrap_angle(goal.theta)
        waypoints.append(Pose2D(px, py, theta))
    return Path(waypoints=tuple(waypoints), cost=cost)
