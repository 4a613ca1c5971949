"""Shared sample world and map builders for the test suite.

Walls and obstacle edges sit 0.4 cells away from cell boundaries so one
surface never straddles two cell columns; obstacles keep >= 1 m clearance
from the square tour used in SLAM tests, and each quadrant holds a feature
that anchors rotation for scan matching.
"""

from __future__ import annotations

import math

from hovernav.geometry import Pose2D
from hovernav.mapping import MapParams, empty_grid, integrate_scan, to_occupancy
from hovernav.sensing import LidarSpec, raycast_scan
from hovernav.vehicle import CircleObstacle, RectObstacle, WorldModel

ARENA = WorldModel(
    -3.52, -3.02, 3.52, 3.02,
    obstacles=(
        RectObstacle("crate", 0.52, -0.48, 1.52, 0.52),
        CircleObstacle("pillar", -0.98, 0.98, 0.3),
        RectObstacle("bench", -1.48, -1.48, -0.48, -1.08),
    ),
)

SURVEY_POSES = tuple(
    Pose2D(x, y, th)
    for x in (-2.4, 0.0, 2.4)
    for y in (-2.2, 0.0, 2.2)
    for th in (0.0, math.pi / 2)
)


def quiet_scan(pose, world=ARENA, seed=0):
    return raycast_scan(world, pose, LidarSpec(noise_sigma=0.0), seed)


def survey_grid(params: MapParams = MapParams(), world=ARENA):
    """Noise-free log-odds map from the survey poses, two passes.

    Two passes push every surface cell past the occupied threshold (a single
    endpoint bump is ~0.85 against a 1.0 cutoff).
    """
    grid = empty_grid(params)
    for _ in range(2):
        for i, p in enumerate(SURVEY_POSES):
            grid = integrate_scan(grid, p, quiet_scan(p, world, seed=i), params)
    return grid


def survey_occupancy(params: MapParams = MapParams(), world=ARENA):
    return to_occupancy(survey_grid(params, world),
                        params.occ_threshold, params.free_threshold)
