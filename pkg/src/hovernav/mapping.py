"""Occupancy-grid SLAM at hover level.

The map is a log-odds grid. Each scan carves free space along its beams and
bumps the endpoint cells; a correlative matcher (exhaustive search over a
small pose window, one-cell / half-degree steps) corrects odometry drift by
scoring candidate poses on the fraction of beam endpoints that land on
already-occupied cells. No pose graph: single-room worlds at this scale do
not accumulate enough drift to need loop closure.

Grids are value-like: operations return new LogOddsGrid objects and never
mutate the array behind a published snapshot. The grid doubles toward
whichever side a scan exits, so the caller never sizes the world up front.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose2D, compose_pose, wrap_angle
from .sensing import LaserScan

MIN_MATCH_POINTS = 10


class LowScoreError(Exception):
    """Best correlative score too weak to trust; fall back to odometry."""

    def __init__(self, score: float):
        super().__init__(f"best match score {score:.3f} below threshold")
        self.score = score


@dataclass(frozen=True)
class MapParams:
    resolution: float = 0.05
    p_hit: float = 0.7
    p_free: float = 0.4
    clamp: tuple[float, float] = (-4.0, 4.0)
    occ_threshold: float = 1.0
    free_threshold: float = -1.0
    match_window: tuple[float, float, float] = (0.25, 0.25, math.radians(6.0))
    match_gate_trans: float = 0.05  # m moved before the matcher runs again
    match_gate_rot: float = math.radians(2.0)
    low_score: float = 0.3
    initial_size: int = 64  # cells per side of a fresh grid

    @property
    def l_occ(self) -> float:
        return math.log(self.p_hit / (1.0 - self.p_hit))

    @property
    def l_free(self) -> float:
        # positive magnitude of the free-space decrement
        return -math.log(self.p_free / (1.0 - self.p_free))

    def validate(self) -> list[str]:
        problems = []
        if self.resolution <= 0:
            problems.append("map.resolution must be > 0")
        if not 0.5 < self.p_hit < 1.0:
            problems.append("map.p_hit must be in (0.5, 1)")
        if not 0.0 < self.p_free < 0.5:
            problems.append("map.p_free must be in (0, 0.5)")
        if self.clamp[0] >= 0 or self.clamp[1] <= 0:
            problems.append("map.clamp must straddle zero")
        if not self.clamp[0] < self.free_threshold < 0 < self.occ_threshold < self.clamp[1]:
            problems.append("map.thresholds must sit inside the clamp, around zero")
        if any(w <= 0 for w in self.match_window):
            problems.append("map.match_window components must be > 0")
        if not 0 < self.low_score < 1:
            problems.append("map.low_score must be in (0, 1)")
        if self.initial_size < 2:
            problems.append("map.initial_size must be >= 2")
        return problems


@dataclass(frozen=True)
class LogOddsGrid:
    resolution: float
    width: int
    height: int
    origin: Pose2D  # world position of the (0,0) cell's low corner; theta 0
    cells: np.ndarray  # (height, width) float64 log-odds
    clamp: tuple[float, float] = (-4.0, 4.0)

    def cell_of(self, x, y):
        """World coords -> integer cell indices (ix, iy); accepts arrays."""
        ix = np.floor((np.asarray(x) - self.origin.x) / self.resolution).astype(int)
        iy = np.floor((np.asarray(y) - self.origin.y) / self.resolution).astype(int)
        return ix, iy

    def in_bounds(self, ix, iy):
        return (ix >= 0) & (ix < self.width) & (iy >= 0) & (iy < self.height)

    @property
    def x_max(self) -> float:
        return self.origin.x + self.width * self.resolution

    @property
    def y_max(self) -> float:
        return self.origin.y + self.height * self.resolution


def empty_grid(params: MapParams, center: Pose2D = Pose2D(0.0, 0.0, 0.0)) -> LogOddsGrid:
    """Unknown grid of initial_size^2 cells roughly centered on a pose.

    The origin snaps to whole-cell multiples so cell edges stay aligned
    across regrowths.
    """
    n = params.initial_size
    res = params.resolution
    ox = (round(center.x / res) - n // 2) * res
    oy = (round(center.y / res) - n // 2) * res
    return LogOddsGrid(
        resolution=res,
        width=n,
        height=n,
        origin=Pose2D(ox, oy, 0.0),
        cells=np.zeros((n, n)),
        clamp=params.clamp,
    )


def _grow_to_fit(grid: LogOddsGrid, xmin, ymin, xmax, ymax) -> LogOddsGrid:
    """Double the grid toward any side the given extent escapes."""
    res = grid.resolution
    ox, oy = grid.origin.x, grid.origin.y
    w, h = grid.width, grid.height
    cells = grid.cells
    changed = False
    while xmin < ox:
        cells = np.concatenate([np.zeros((h, w)), cells], axis=1)
        ox -= w * res
        w *= 2
        changed = True
    while xmax >= ox + w * res:
        cells = np.concatenate([cells, np.zeros((h, w))], axis=1)
        w *= 2
        changed = True
    while ymin < oy:
        cells = np.concatenate([np.zeros((h, w)), cells], axis=0)
        oy -= h * res
        h *= 2
        changed = True
    while ymax >= oy + h * res:
        cells = np.concatenate([cells, np.zeros((h, w))], axis=0)
        h *= 2
        changed = True
    if not changed:
        return grid
    return LogOddsGrid(res, w, h, Pose2D(ox, oy, 0.0), cells, grid.clamp)


def integrate_scan(
    grid: LogOddsGrid,
    pose: Pose2D,
    scan: LaserScan,
    params: MapParams = MapParams(),
) -> LogOddsGrid:
    """Fold one scan into the grid at the given sensor pose.

    Beams with a return carve free space up to (excluding) the endpoint
    cell and bump the endpoint; saturated or silent beams carve out to
    range_max and bump nothing. Every cell moves at most one increment per
    scan no matter how many beams cross it, and an endpoint bump beats a
    carve, so one scan shifts a cell by at most l_occ.
    """
    spec = scan.spec
    r = np.asarray(scan.ranges)
    ang = spec.angles() + pose.theta
    hit = np.isfinite(r) & (r < spec.range_max)
    carve_len = np.where(np.isfinite(r), np.minimum(r, spec.range_max), spec.range_max)

    ex = pose.x + np.where(hit, r, 0.0) * np.cos(ang)
    ey = pose.y + np.where(hit, r, 0.0) * np.sin(ang)
    reach_x = pose.x + carve_len * np.cos(ang)
    reach_y = pose.y + carve_len * np.sin(ang)
    pad = grid.resolution
    grid = _grow_to_fit(
        grid,
        min(pose.x, reach_x.min(), ex.min()) - pad,
        min(pose.y, reach_y.min(), ey.min()) - pad,
        max(pose.x, reach_x.max(), ex.max()) + pad,
        max(pose.y, reach_y.max(), ey.max()) + pad,
    )

    step = grid.resolution / 3.0
    n_steps = int(np.ceil(carve_len.max() / step)) + 1
    t = np.arange(n_steps) * step  # (k,)
    live = t[None, :] < carve_len[:, None]  # (beams, k)
    px = pose.x + t[None, :] * np.cos(ang)[:, None]
    py = pose.y + t[None, :] * np.sin(ang)[:, None]
    ix, iy = grid.cell_of(px, py)

    # never carve a beam's own endpoint cell
    hix, hiy = grid.cell_of(ex, ey)
    keep = live & ~(hit[:, None] & (ix == hix[:, None]) & (iy == hiy[:, None]))
    keep &= grid.in_bounds(ix, iy)

    free_mask = np.zeros(grid.cells.shape, dtype=bool)
    free_mask[iy[keep], ix[keep]] = True
    occ_mask = np.zeros(grid.cells.shape, dtype=bool)
    ok = hit & grid.in_bounds(hix, hiy)
    occ_mask[hiy[ok], hix[ok]] = True
    free_mask &= ~occ_mask  # an endpoint bump beats any carve this scan

    cells = grid.cells.copy()
    cells[free_mask] -= params.l_free
    cells[occ_mask] += params.l_occ
    np.clip(cells, grid.clamp[0], grid.clamp[1], out=cells)
    return replace(grid, cells=cells)


@dataclass(frozen=True)
class MatchResult:
    pose: Pose2D
    score: float  # fraction of endpoints on log-odds > 0 cells
    converged: bool


MATCH_ROT_STEP = math.radians(0.5)


def match_scan_to_map(
    grid: LogOddsGrid,
    scan: LaserScan,
    initial: Pose2D,
    window: tuple[float, float, float],
    low_score: float = 0.3,
) -> MatchResult:
    """Exhaustive correlative search around `initial`.

    Candidates step one cell in x/y and half a degree in heading across the
    half-width window. Score is the fraction of finite endpoints landing on
    positive log-odds cells; ties break toward the smallest displacement
    from the initial pose. Raises LowScoreError when even the best candidate
    explains too little of the scan.
    """
    occupied = grid.cells > 0.0
    if not occupied.any():
        raise LowScoreError(0.0)
    pts = scan.points()
    if len(pts) < MIN_MATCH_POINTS:
        raise LowScoreError(0.0)

    res = grid.resolution
    nx = int(math.floor(window[0] / res))
    ny = int(math.floor(window[1] / res))
    nth = int(math.floor(window[2] / MATCH_ROT_STEP))
    dxs = np.arange(-nx, nx + 1)  # cell offsets
    dys = np.arange(-ny, ny + 1)
    dths = np.arange(-nth, nth + 1) * MATCH_ROT_STEP

    m = float(len(pts))
    scores = np.empty((len(dths), len(dxs), len(dys)))
    for k, dth in enumerate(dths):
        a = initial.theta + dth
        c, s = math.cos(a), math.sin(a)
        wx = initial.x + pts[:, 0] * c - pts[:, 1] * s
        wy = initial.y + pts[:, 0] * s + pts[:, 1] * c
        ix0 = np.floor((wx - grid.origin.x) / res).astype(int)
        iy0 = np.floor((wy - grid.origin.y) / res).astype(int)
        # integer-cell translations shift indices directly
        ix = ix0[:, None, None] + dxs[None, :, None]  # (m, nx, 1)
        iy = iy0[:, None, None] + dys[None, None, :]  # (m, 1, ny)
        valid = (ix >= 0) & (ix < grid.width) & (iy >= 0) & (iy < grid.height)
        hits = np.zeros(np.broadcast_shapes(ix.shape, iy.shape), dtype=bool)
        np.copyto(
            hits,
            occupied[np.clip(iy, 0, grid.height - 1), np.clip(ix, 0, grid.width - 1)],
            where=valid,
        )
        scores[k] = hits.sum(axis=0) / m

    disp2 = ((dxs * res) ** 2)[None, :, None] + ((dys * res) ** 2)[None, None, :]
    rot_mag = np.abs(dths)[:, None, None]
    # heading errors compound into lateral drift downstream, so among
    # equal scores stay closest in rotation before translation
    flat_keys = np.broadcast_arrays(-scores, rot_mag, disp2)
    order = np.lexsort(
        tuple(k.ravel() for k in reversed(flat_keys))
    )  # primary key last in lexsort
    k, i, j = np.unravel_index(order[0], scores.shape)
    score = float(scores[k, i, j])
    if score < low_score:
        raise LowScoreError(score)
    pose = Pose2D(
        initial.x + dxs[i] * res,
        initial.y + dys[j] * res,
        wrap_angle(initial.theta + dths[k]),
    )
    return MatchResult(pose=pose, score=score, converged=True)


class CellState(enum.IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


@dataclass(frozen=True)
class OccupancyGrid:
    resolution: float
    width: int
    height: int
    origin: Pose2D
    cells: np.ndarray  # (height, width) uint8 of CellState values


def to_occupancy(
    grid: LogOddsGrid,
    occ_threshold: float = 1.0,
    free_threshold: float = -1.0,
) -> OccupancyGrid:
    out = np.full((grid.height, grid.width), int(CellState.UNKNOWN), dtype=np.uint8)
    out[grid.cells > occ_threshold] = int(CellState.OCCUPIED)
    out[grid.cells < free_threshold] = int(CellState.FREE)
    return OccupancyGrid(
        resolution=grid.resolution,
        width=grid.width,
        height=grid.height,
        origin=grid.origin,
        cells=out,
    )


@dataclass
class SlamState:
    """Mutable SLAM bookkeeping owned by the runtime's sensor tick."""

    params: MapParams = field(default_factory=MapParams)
    grid: LogOddsGrid | None = None
    pose: Pose2D = Pose2D(0.0, 0.0, 0.0)
    initialized: bool = False
    dist_since_match: float = 0.0
    rot_since_match: float = 0.0
    matches: int = 0
    fallbacks: int = 0
    skips: int = 0


def slam_tick(
    state: SlamState, odom_delta, scan: LaserScan
) -> tuple[Pose2D, LogOddsGrid]:
    """Advance SLAM by one scan: predict from odometry, correct, integrate.

    The matcher only runs after enough motion accumulates; when it cannot
    produce a confident score the odometry prediction stands. Scans with too
    few returns are skipped outright and leave pose and map untouched.
    """
    finite = sum(1 for r in scan.ranges if math.isfinite(r))
    if not state.initialized:
        state.grid = empty_grid(state.params, Pose2D(0.0, 0.0, 0.0))
        state.pose = Pose2D(0.0, 0.0, 0.0)
        state.initialized = True
        if finite < MIN_MATCH_POINTS:
            state.skips += 1
            return state.pose, state.grid
    elif finite < MIN_MATCH_POINTS:
        state.skips += 1
        return state.pose, state.grid
    else:
        delta = odom_delta.delta
        predicted = compose_pose(state.pose, delta)
        state.dist_since_match += math.hypot(delta.tx, delta.ty)
        state.rot_since_match += abs(delta.rot)
        state.pose = predicted
        if (
            state.dist_since_match > state.params.match_gate_trans
            or state.rot_since_match > state.params.match_gate_rot
        ):
            try:
                result = match_scan_to_map(
                    state.grid,
                    scan,
                    predicted,
                    state.params.match_window,
                    low_score=state.params.low_score,
                )
                state.pose = result.pose
                state.matches += 1
            except LowScoreError:
                state.fallbacks += 1
            state.dist_since_match = 0.0
            state.rot_since_match = 0.0
    state.grid = integrate_scan(state.grid, state.pose, scan, state.params)
    return state.pose, state.grid
