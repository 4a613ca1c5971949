"""A* against a uniform-cost Dijkstra oracle on random costmaps."""

from __future__ import annotations

import heapq
import math

import numpy as np
import pytest

from hovernav.geometry import Pose2D
from hovernav.mapping import CellState, OccupancyGrid
from hovernav.nav import (
    INSCRIBED,
    Costmap,
    CostmapParams,
    GoalInCollisionError,
    NoPathError,
    StartInCollisionError,
    build_costmap,
    plan_global,
)

SQRT2 = math.sqrt(2.0)
RES = 0.05


def costmap_from(cells: np.ndarray, res: float = RES) -> Costmap:
    h, w = cells.shape
    occ = OccupancyGrid(res, w, h, Pose2D(0.0, 0.0, 0.0), cells)
    return build_costmap(occ)


def center(cm: Costmap, ix: int, iy: int, theta: float = 0.0) -> Pose2D:
    x, y = cm.cell_center(ix, iy)
    return Pose2D(x, y, theta)


def dijkstra_cost(cm: Costmap, s: tuple[int, int], g: tuple[int, int]):
    """Optimal cost with no heuristic; integer pairs keep sums exact."""
    w, h = cm.width, cm.height
    cells = cm.cells

    def val(a: int, b: int) -> float:
        return (a + b * SQRT2) / 256.0

    best: dict[tuple[int, int], tuple[int, int]] = {s: (0, 0)}
    heap = [(0.0, s[1] * w + s[0], 0, 0)]
    done: set[tuple[int, int]] = set()
    steps = (
        (1, 0, False), (-1, 0, False), (0, 1, False), (0, -1, False),
        (1, 1, True), (1, -1, True), (-1, 1, True), (-1, -1, True),
    )
    while heap:
        _, flat, a, b = heapq.heappop(heap)
        cur = (flat % w, flat // w)
        if cur in done or best.get(cur) != (a, b):
            continue
        done.add(cur)
        if cur == g:
            return val(a, b)
        for dx, dy, diag in steps:
            nx, ny = cur[0] + dx, cur[1] + dy
            if not (0 <= nx < w and 0 <= ny < h):
                continue
            c = int(cells[ny, nx])
            if c >= INSCRIBED:
                continue
            step = 256 + c
            na, nb = (a, b + step) if diag else (a + step, b)
            prev = best.get((nx, ny))
            if prev is None or val(na, nb) < val(*prev):
                best[(nx, ny)] = (na, nb)
                heapq.heappush(heap, (val(na, nb), ny * w + nx, na, nb))
    return None


def test_empty_grid_diagonal_is_exact():
    cm = costmap_from(np.zeros((10, 10), np.uint8), res=1.0)
    path = plan_global(cm, center(cm, 0, 0), center(cm, 9, 9, theta=0.3))
    assert path.cost == 9 * SQRT2
    assert len(path.waypoints) == 10
    assert path.waypoints[0].x == pytest.approx(0.5)
    assert path.waypoints[-1].theta == pytest.approx(0.3)


def test_consecutive_waypoints_grid_adjacent():
    cells = np.zeros((30, 30), np.uint8)
    cells[10:20, 14] = int(CellState.OCCUPIED)
    cm = costmap_from(cells)
    path = plan_global(cm, center(cm, 2, 15), center(cm, 27, 15))
    for a, b in zip(path.waypoints, path.waypoints[1:]):
        dx = round((b.x - a.x) / cm.resolution)
        dy = round((b.y - a.y) / cm.resolution)
        assert max(abs(dx), abs(dy)) == 1


def test_goal_in_collision_rejected():
    cells = np.zeros((30, 30), np.uint8)
    cells[15, 15] = int(CellState.OCCUPIED)
    cm = costmap_from(cells)
    with pytest.raises(GoalInCollisionError):
        plan_global(cm, center(cm, 2, 2), center(cm, 15, 15))
    # inside the inscribed ring is just as fatal as the obstacle itself
    with pytest.raises(GoalInCollisionError):
        plan_global(cm, center(cm, 2, 2), center(cm, 15, 17))
    with pytest.raises(GoalInCollisionError):
        plan_global(cm, center(cm, 2, 2), Pose2D(99.0, 99.0, 0.0))


def test_start_in_collision_rejected():
    cells = np.zeros((30, 30), np.uint8)
    cells[15, 15] = int(CellState.OCCUPIED)
    cm = costmap_from(cells)
    with pytest.raises(StartInCollisionError):
        plan_global(cm, center(cm, 15, 16), center(cm, 2, 2))


def test_no_path_when_walled_off():
    cells = np.zeros((40, 40), np.uint8)
    cells[:, 20] = int(CellState.OCCUPIED)
    cm = costmap_from(cells)
    with pytest.raises(NoPathError):
        plan_global(cm, center(cm, 5, 20), center(cm, 35, 20))


def test_routes_through_the_only_opening():
    cells = np.zeros((60, 60), np.uint8)
    cells[:, 30] = int(CellState.OCCUPIED)
    cells[40:54, 30] = int(CellState.FREE)  # one door, wide enough to clear
    cm = costmap_from(cells)
    path = plan_global(cm, center(cm, 10, 10), center(cm, 50, 10))
    crossings = [q for q in path.waypoints
                 if cm.cell_index(q.x, q.y)[0] == 30]
    assert crossings
    assert all(40 <= cm.cell_index(q.x, q.y)[1] < 54 for q in crossings)


def random_costmap(seed: int, shape=(50, 50), blocked=0.30) -> Costmap:
    """Random cost field: varied traversal costs with ~30% lethal cells."""
    rng = np.random.default_rng(seed)
    cells = rng.integers(0, 253, size=shape).astype(np.uint8)
    cells[rng.uniform(size=shape) < blocked] = 254
    h, w = shape
    return Costmap(
        resolution=0.1,
        width=w,
        height=h,
        origin=Pose2D(0.0, 0.0, 0.0),
        cells=cells,
        distances=np.full(shape, np.inf),
        params=CostmapParams(),
    )


@pytest.mark.parametrize("seed", range(30))
def test_cost_equals_dijkstra_oracle(seed):
    cm = random_costmap(1000 + seed)
    rng = np.random.default_rng(5000 + seed)
    open_idx = np.argwhere(cm.cells < INSCRIBED)
    picks = rng.choice(len(open_idx), size=2, replace=False)
    (sy, sx), (gy, gx) = open_idx[picks[0]], open_idx[picks[1]]
    oracle = dijkstra_cost(cm, (sx, sy), (gx, gy))
    try:
        path = plan_global(cm, center(cm, sx, sy), center(cm, gx, gy))
    except NoPathError:
        assert oracle is None
        return
    assert oracle is not None
    assert path.cost == oracle  # exact, not approximate
    assert all(cm.cost_at(q.x, q.y) < INSCRIBED for q in path.waypoints)


def test_plan_is_deterministic():
    cm = random_costmap(77)
    open_idx = np.argwhere(cm.cells < INSCRIBED)
    (sy, sx), (gy, gx) = open_idx[0], open_idx[-1]
    first = plan_global(cm, center(cm, sx, sy), center(cm, gx, gy))
    second = plan_global(cm, center(cm, sx, sy), center(cm, gx, gy))
    assert first.cost == second.cost
    assert first.waypoints == second.waypoints
