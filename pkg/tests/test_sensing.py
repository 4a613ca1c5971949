"""LiDAR raycasting against geometric oracles, ICP odometry recovery."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hovernav.geometry import Pose2D, Transform2D, compose, pose_delta
from hovernav.sensing import (
    DegenerateScanError,
    LaserScan,
    LidarSpec,
    OutOfBoundsError,
    laser_odometry,
    parse_scan_log_line,
    raycast_scan,
    scan_log_line,
)
from hovernav.vehicle import CircleObstacle, RectObstacle, WorldModel

QUIET = LidarSpec(noise_sigma=0.0)
SQUARE = WorldModel(-2.0, -2.0, 2.0, 2.0)
CLUTTERED = WorldModel(
    -3.0, -2.5, 3.0, 2.5,
    obstacles=(
        RectObstacle("crate", 0.5, -0.5, 1.5, 0.5),
        CircleObstacle("pillar", -1.5, 1.0, 0.4),
    ),
)
# long room with both ends visible: anchors translation for the matcher
CORRIDOR = WorldModel(
    -1.0, -1.0, 9.0, 1.0,
    obstacles=(RectObstacle("bench", 4.0, -1.0, 4.6, -0.4),),
)


def beam_index(spec: LidarSpec, angle: float) -> int:
    spacing = (spec.angle_max - spec.angle_min) / (spec.num_beams - 1)
    i = round((angle - spec.angle_min) / spacing)
    assert math.isclose(spec.angle_min + i * spacing, angle, abs_tol=1e-9)
    return i


def test_centered_square_axis_beam():
    scan = raycast_scan(SQUARE, Pose2D(0.0, 0.0, 0.0), QUIET, 0)
    assert scan.ranges[beam_index(QUIET, 0.0)] == pytest.approx(2.0, abs=1e-9)


def test_centered_square_diagonal_beam():
    scan = raycast_scan(SQUARE, Pose2D(0.0, 0.0, 0.0), QUIET, 0)
    i = beam_index(QUIET, math.pi / 4)
    assert scan.ranges[i] == pytest.approx(2.0 * math.sqrt(2.0), abs=1e-9)


def _march_oracle(world, pose, spec, samples=10_000):
    """Dense sampling along each beam; first sample in solid space wins."""
    step = spec.range_max / samples
    ts = np.arange(1, samples + 1) * step
    out = []
    for a in spec.angles() + pose.theta:
        xs = pose.x + ts * math.cos(a)
        ys = pose.y + ts * math.sin(a)
        solid = (xs < world.xmin) | (xs > world.xmax) | (ys < world.ymin) | (ys > world.ymax)
        for ob in world.obstacles:
            if isinstance(ob, RectObstacle):
                solid |= (xs > ob.xmin) & (xs < ob.xmax) & (ys > ob.ymin) & (ys < ob.ymax)
            else:
                solid |= (xs - ob.cx) ** 2 + (ys - ob.cy) ** 2 < ob.radius**2
        out.append(ts[int(np.argmax(solid))] if solid.any() else math.inf)
    return np.array(out)


def test_raycast_matches_marching_oracle():
    pose = Pose2D(-0.7, 0.3, 0.4)
    scan = raycast_scan(CLUTTERED, pose, QUIET, 0)
    oracle = _march_oracle(CLUTTERED, pose, QUIET)
    step = QUIET.range_max / 10_000
    got = np.array(scan.ranges)
    finite = np.isfinite(oracle)
    assert np.isfinite(got)[finite.nonzero()].all()
    assert np.max(np.abs(got[finite] - oracle[finite])) <= step


def test_no_return_beyond_range_max():
    barn = WorldModel(-15.0, -15.0, 15.0, 15.0,
                      obstacles=(CircleObstacle("post", 3.0, 0.0, 0.5),))
    scan = raycast_scan(barn, Pose2D(0.0, 0.0, 0.0), QUIET, 0)
    assert scan.ranges[beam_index(QUIET, 0.0)] == pytest.approx(2.5, abs=1e-9)
    assert math.isinf(scan.ranges[beam_index(QUIET, math.pi / 2)])


def test_noise_stays_clamped_and_skips_no_returns():
    loud = LidarSpec(noise_sigma=5.0)
    barn = WorldModel(-15.0, -15.0, 15.0, 15.0,
                      obstacles=(CircleObstacle("post", 3.0, 0.0, 0.5),))
    scan = raycast_scan(barn, Pose2D(0.0, 0.0, 0.0), loud, 7)
    finite = [r for r in scan.ranges if math.isfinite(r)]
    assert finite and all(loud.range_min <= r <= loud.range_max for r in finite)
    assert math.isinf(scan.ranges[beam_index(loud, math.pi / 2)])


@given(st.integers(0, 2**64 - 1))
def test_same_seed_bit_identical(seed):
    spec = LidarSpec(num_beams=60)
    a = raycast_scan(CLUTTERED, Pose2D(0.0, 0.0, 0.2), spec, seed)
    b = raycast_scan(CLUTTERED, Pose2D(0.0, 0.0, 0.2), spec, seed)
    assert a.ranges == b.ranges


def test_different_seeds_differ():
    a = raycast_scan(CLUTTERED, Pose2D(0.0, 0.0, 0.0), LidarSpec(), 1)
    b = raycast_scan(CLUTTERED, Pose2D(0.0, 0.0, 0.0), LidarSpec(), 2)
    assert a.ranges != b.ranges


def test_rotation_by_one_beam_spacing_rolls_the_scan():
    spacing = 2.0 * math.pi / 360
    base = raycast_scan(CLUTTERED, Pose2D(0.4, -0.2, 0.0), QUIET, 0)
    turned = raycast_scan(CLUTTERED, Pose2D(0.4, -0.2, spacing), QUIET, 0)
    assert np.allclose(turned.ranges, np.roll(base.ranges, -1), atol=1e-6)


def test_raycast_rejects_outside_pose():
    with pytest.raises(OutOfBoundsError):
        raycast_scan(SQUARE, Pose2D(5.0, 0.0, 0.0), QUIET, 0)


def test_points_cartesian_conversion():
    spec = LidarSpec(angle_min=0.0, angle_max=math.pi / 2, num_beams=2,
                     range_min=0.1, range_max=10.0, noise_sigma=0.0)
    scan = LaserScan(0.0, "lidar_link", (2.0, 3.0), spec)
    pts = scan.points()
    assert np.allclose(pts, [[2.0, 0.0], [0.0, 3.0]], atol=1e-12)


def test_spec_validation():
    assert LidarSpec().validate() == []
    assert LidarSpec(num_beams=1).validate()
    assert LidarSpec(range_min=9.0).validate()
    assert LidarSpec(noise_sigma=-0.1).validate()


# --- laser odometry ---------------------------------------------------------


def scan_at(world, pose, seed, sigma=0.01):
    return raycast_scan(world, pose, LidarSpec(noise_sigma=sigma), seed)


def test_identical_scans_give_identity():
    s = scan_at(CLUTTERED, Pose2D(0.0, 0.0, 0.3), 5, sigma=0.0)
    odo = laser_odometry(s, s, Transform2D.identity())
    assert abs(odo.delta.tx) <= 1e-6
    assert abs(odo.delta.ty) <= 1e-6
    assert abs(odo.delta.rot) <= 1e-6
    assert not odo.degraded


def test_corridor_translation_recovered():
    a_pose, b_pose = Pose2D(2.0, 0.0, 0.0), Pose2D(2.1, 0.0, 0.0)
    a = scan_at(CORRIDOR, a_pose, 11)
    b = scan_at(CORRIDOR, b_pose, 12)
    odo = laser_odometry(a, b, Transform2D.identity())
    truth = pose_delta(a_pose, b_pose)
    assert abs(odo.delta.tx - truth.tx) <= 0.02
    assert abs(odo.delta.ty - truth.ty) <= 0.02
    assert abs(odo.delta.rot) <= math.radians(2.0)
    assert all(c >= 0 for c in odo.covariance_diag)


def test_pure_rotation_recovered():
    a = scan_at(CLUTTERED, Pose2D(0.5, 0.0, 0.0), 21)
    b = scan_at(CLUTTERED, Pose2D(0.5, 0.0, 0.1), 22)
    odo = laser_odometry(a, b, Transform2D.identity())
    assert abs(odo.delta.rot - 0.1) <= math.radians(1.0)
    assert math.hypot(odo.delta.tx, odo.delta.ty) <= 0.03


def test_delta_composition_consistency():
    poses = [Pose2D(2.0, 0.0, 0.0), Pose2D(2.15, 0.05, 0.05), Pose2D(2.3, 0.0, 0.1)]
    scans = [scan_at(CORRIDOR, p, 30 + i) for i, p in enumerate(poses)]
    ab = laser_odometry(scans[0], scans[1], Transform2D.identity()).delta
    bc = laser_odometry(scans[1], scans[2], Transform2D.identity()).delta
    ac = laser_odometry(scans[0], scans[2], Transform2D.identity()).delta
    chained = compose(ab, bc)
    assert math.hypot(chained.tx - ac.tx, chained.ty - ac.ty) <= 0.03
    assert abs(chained.rot - ac.rot) <= math.radians(2.0)


def test_too_few_returns_is_degenerate():
    spec = LidarSpec(noise_sigma=0.0)
    ranges = [math.inf] * spec.num_beams
    for i in range(5):
        ranges[i * 3] = 2.0
    sparse = LaserScan(0.0, "lidar_link", tuple(ranges), spec)
    full = scan_at(CLUTTERED, Pose2D(0.0, 0.0, 0.0), 1, sigma=0.0)
    with pytest.raises(DegenerateScanError):
        laser_odometry(sparse, full, Transform2D.identity())
    with pytest.raises(DegenerateScanError):
        laser_odometry(full, sparse, Transform2D.identity())


def test_mismatched_specs_rejected():
    a = scan_at(CLUTTERED, Pose2D(0.0, 0.0, 0.0), 1, sigma=0.0)
    b = raycast_scan(CLUTTERED, Pose2D(0.0, 0.0, 0.0), LidarSpec(num_beams=180, noise_sigma=0.0), 1)
    with pytest.raises(ValueError):
        laser_odometry(a, b, Transform2D.identity())


# --- scan log ---------------------------------------------------------------


def test_scan_log_round_trip():
    spec = LidarSpec(noise_sigma=0.0)
    barn = WorldModel(-15.0, -15.0, 15.0, 15.0,
                      obstacles=(CircleObstacle("post", 3.0, 0.0, 0.5),))
    pose = Pose2D(0.25, -0.5, 1.234567)
    scan = raycast_scan(barn, pose, spec, 3, stamp=12.5)
    line = scan_log_line(scan, pose)
    parsed, truth = parse_scan_log_line(line, spec)
    assert parsed.stamp == pytest.approx(12.5, abs=1e-6)
    assert truth.x == pytest.approx(pose.x, abs=1e-6)
    assert truth.theta == pytest.approx(pose.theta, abs=1e-6)
    for got, want in zip(parsed.ranges, scan.ranges):
        if math.isinf(want):
            assert math.isinf(got)
        else:
            assert got == pytest.approx(want, abs=5e-5)


def test_scan_log_rejects_wrong_width():
    with pytest.raises(ValueError):
        parse_scan_log_line("0.0 1.0 2.0 3.0 1.0 2.0", LidarSpec())
