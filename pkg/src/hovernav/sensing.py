"""Simulated 2-D LiDAR and scan-to-scan laser odometry.

Raycasting is exact: slab tests against the room walls and rectangle
obstacles, a quadratic against circles, vectorized over the whole beam fan.
Gaussian range noise (seeded, reproducible) is clamped into the sensor's
valid interval; beams that see nothing inside range_max report +inf.

Odometry is point-to-point ICP between consecutive scans. It recovers the
body-frame motion T such that T maps points of the newer scan onto the older
one, which for a rigid world equals prev_pose^-1 * cur_pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose2D, Transform2D
from .vehicle import CircleObstacle, RectObstacle, WorldModel

LIDAR_FRAME_NAME = "lidar_link"


class OutOfBoundsError(Exception):
    """Sensor pose outside the world: nothing sensible to raycast."""


class DegenerateScanError(Exception):
    """Too few finite returns to match against."""


@dataclass(frozen=True)
class LidarSpec:
    angle_min: float = -math.pi
    angle_max: float = math.pi - 2.0 * math.pi / 360.0
    num_beams: int = 360
    range_min: float = 0.12
    range_max: float = 8.0
    noise_sigma: float = 0.01
    rate: float = 10.0

    def validate(self) -> list[str]:
        problems = []
        if self.angle_max <= self.angle_min:
            problems.append("lidar.angle_max must be > angle_min")
        if self.num_beams < 2:
            problems.append("lidar.num_beams must be >= 2")
        if not 0 <= self.range_min < self.range_max:
            problems.append("lidar.ranges must satisfy 0 <= range_min < range_max")
        if self.noise_sigma < 0:
            problems.append("lidar.noise_sigma must be >= 0")
        if self.rate <= 0:
            problems.append("lidar.rate must be > 0")
        return problems

    def angles(self) -> np.ndarray:
        return np.linspace(self.angle_min, self.angle_max, self.num_beams)


@dataclass(frozen=True)
class LaserScan:
    stamp: float
    pose_frame: str
    ranges: tuple[float, ...]  # inf = no return inside range_max
    spec: LidarSpec

    def points(self) -> np.ndarray:
        """Finite returns as (k, 2) cartesian points in the sensor frame."""
        r = np.asarray(self.ranges)
        ang = self.spec.angles()
        keep = np.isfinite(r)
        r, ang = r[keep], ang[keep]
        return np.column_stack((r * np.cos(ang), r * np.sin(ang)))


@dataclass(frozen=True)
class OdometryDelta:
    delta: Transform2D  # body-frame motion between the two scan poses
    covariance_diag: tuple[float, float, float]
    degraded: bool = False


def _ray_hits(world: WorldModel, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Distance to the first surface along each ray; rays start inside bounds."""
    ox, oy = origin
    dx, dy = dirs[:, 0], dirs[:, 1]
    big = np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        # exit through the room walls always exists from inside
        tx = np.where(dx > 0, (world.xmax - ox) / dx,
                      np.where(dx < 0, (world.xmin - ox) / dx, big))
        ty = np.where(dy > 0, (world.ymax - oy) / dy,
                      np.where(dy < 0, (world.ymin - oy) / dy, big))
        best = np.minimum(tx, ty)
        for ob in world.obstacles:
            if isinstance(ob, RectObstacle):
                t1 = (ob.xmin - ox) / dx
                t2 = (ob.xmax - ox) / dx
                t3 = (ob.ymin - oy) / dy
                t4 = (ob.ymax - oy) / dy
                tnear = np.maximum(np.minimum(t1, t2), np.minimum(t3, t4))
                tfar = np.minimum(np.maximum(t1, t2), np.maximum(t3, t4))
                hit = (tfar >= tnear) & (tfar > 0)
                t = np.where(tnear > 0, tnear, 0.0)  # inside: contact at 0
                best = np.where(hit, np.minimum(best, t), best)
            else:
                fx, fy = ox - ob.cx, oy - ob.cy
                b = dx * fx + dy * fy
                c0 = fx * fx + fy * fy - ob.radius * ob.radius
                disc = b * b - c0
                root = np.sqrt(np.maximum(disc, 0.0))
                t_in = -b - root
                t_out = -b + root
                hit = (disc >= 0) & (t_out > 0)
                t = np.where(t_in > 0, t_in, 0.0)
                best = np.where(hit, np.minimum(best, t), best)
    return best


def raycast_scan(
    world: WorldModel,
    sensor_pose: Pose2D,
    spec: LidarSpec,
    rng_seed: int,
    stamp: float = 0.0,
) -> LaserScan:
    """One full scan; beams sweep angle_min..angle_max in the sensor frame.

    Noise is Gaussian per beam and clamped into [range_min, range_max];
    beams whose true hit lies beyond range_max return inf untouched.
    """
    if not world.contains(sensor_pose.x, sensor_pose.y):
        raise OutOfBoundsError(
            f"sensor at ({sensor_pose.x:.2f}, {sensor_pose.y:.2f}) outside world"
        )
    ang = spec.angles() + sensor_pose.theta
    dirs = np.column_stack((np.cos(ang), np.sin(ang)))
    true_r = _ray_hits(world, np.array([sensor_pose.x, sensor_pose.y]), dirs)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(rng_seed)
        noisy = true_r + rng.normal(0.0, spec.noise_sigma, spec.num_beams)
    else:
        noisy = true_r.copy()
    ranges = np.where(
        true_r > spec.range_max,
        np.inf,
        np.clip(noisy, spec.range_min, spec.range_max),
    )
    return LaserScan(
        stamp=stamp, pose_frame=LIDAR_FRAME_NAME, ranges=tuple(ranges), spec=spec
    )


MIN_FINITE_RETURNS = 10
ICP_MAX_ITERS = 30
ICP_TOL = 1e-4
ICP_REJECT_DIST = 0.5


def _fit_rigid(src: np.ndarray, dst: np.ndarray) -> Transform2D:
    """Least-squares rigid transform taking src points onto dst (2-D Kabsch)."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    a = src - mu_s
    b = dst - mu_d
    dot = float((a * b).sum())
    cross = float((a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]).sum())
    rot = math.atan2(cross, dot)
    c, s = math.cos(rot), math.sin(rot)
    tx = mu_d[0] - (c * mu_s[0] - s * mu_s[1])
    ty = mu_d[1] - (s * mu_s[0] + c * mu_s[1])
    return Transform2D(tx, ty, rot)


def _apply(t: Transform2D, pts: np.ndarray) -> np.ndarray:
    c, s = math.cos(t.rot), math.sin(t.rot)
    return pts @ np.array([[c, s], [-s, c]]) + np.array([t.tx, t.ty])


def laser_odometry(
    prev: LaserScan, cur: LaserScan, guess: Transform2D
) -> OdometryDelta:
    """ICP between consecutive scans, seeded at guess.

    Correspondences are nearest neighbors of the currently-transformed newer
    cloud in the older cloud, with pairs farther than 0.5 m discarded.
    Stops when the pose update falls below 1e-4 or after 30 iterations; the
    non-converged case is flagged degraded rather than raised.
    """
    if prev.spec != cur.spec:
        raise ValueError("scans use different lidar specs")
    p_prev = prev.points()
    p_cur = cur.points()
    if len(p_prev) < MIN_FINITE_RETURNS or len(p_cur) < MIN_FINITE_RETURNS:
        raise DegenerateScanError(
            f"need >= {MIN_FINITE_RETURNS} finite returns, "
            f"got {len(p_prev)} and {len(p_cur)}"
        )
    tree = cKDTree(p_prev)
    t = guess
    degraded = True
    matched_src: np.ndarray | None = None
    targets: np.ndarray | None = None
    for _ in range(ICP_MAX_ITERS):
        moved = _apply(t, p_cur)
        dist, idx = tree.query(moved)
        keep = dist <= ICP_REJECT_DIST
        if keep.sum() < 3:
            break
        matched_src = p_cur[keep]
        targets = p_prev[idx[keep]]
        t_new = _fit_rigid(matched_src, targets)
        step = max(
            abs(t_new.tx - t.tx), abs(t_new.ty - t.ty), abs(t_new.rot - t.rot)
        )
        t = t_new
        if step < ICP_TOL:
            degraded = False
            break
    if matched_src is None or targets is None:
        # no usable correspondences at all: keep the guess, flag it loudly
        return OdometryDelta(
            delta=guess, covariance_diag=(1e6, 1e6, 1e6), degraded=True
        )
    resid = _apply(t, matched_src) - targets
    var_x = float(np.mean(resid[:, 0] ** 2))
    var_y = float(np.mean(resid[:, 1] ** 2))
    mean_r2 = float(np.mean((matched_src**2).sum(axis=1)))
    var_theta = (var_x + var_y) / mean_r2 if mean_r2 > 0 else 0.0
    return OdometryDelta(
        delta=t, covariance_diag=(var_x, var_y, var_theta), degraded=degraded
    )


# --- scan log (replay format) ----------------------------------------------
#
# One whitespace-separated record per line:
#   stamp x y theta r_0 ... r_{n-1}
# pose is the true sensor pose at scan time (kept for offline checks);
# ranges print with 4 decimals, no-return beams as "inf".


def scan_log_line(scan: LaserScan, truth: Pose2D) -> str:
    head = f"{scan.stamp:.6f} {truth.x:.6f} {truth.y:.6f} {truth.theta:.6f}"
    body = " ".join(
        "inf" if math.isinf(r) else f"{r:.4f}" for r in scan.ranges
    )
    return f"{head} {body}"


def parse_scan_log_line(line: str, spec: LidarSpec) -> tuple[LaserScan, Pose2D]:
    parts = line.split()
    if len(parts) != 4 + spec.num_beams:
        raise ValueError(
            f"expected {4 + spec.num_beams} fields, got {len(parts)}"
        )
    stamp, x, y, theta = (float(v) for v in parts[:4])
    ranges = tuple(float(v) for v in parts[4:])
    scan = LaserScan(
        stamp=stamp, pose_frame=LIDAR_FRAME_NAME, ranges=ranges, spec=spec
    )
    return scan, Pose2D(x, y, theta)
