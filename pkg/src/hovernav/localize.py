"""Monte Carlo localization against a saved occupancy map.

The filter tracks the vehicle during the navigation phase: particles spread
around an operator-provided initial estimate, advance through an odometry
motion model, and reweight against a likelihood field built from the loaded
map. Mapping-phase pose estimation lives in `mapping`; this module assumes
the map is frozen.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .geometry import Pose2D, wrap_angle
from .mapping import CellState, OccupancyGrid
from .sensing import LaserScan, OdometryDelta

__all__ = [
    "AllZeroWeightError",
    "BadCountError",
    "LikelihoodField",
    "LocalizerParams",
    "MotionNoise",
    "Particle",
    "ParticleSet",
    "UpdateStatus",
    "build_likelihood_field",
    "effective_sample_size",
    "estimate",
    "init_particles",
    "measurement_update",
    "motion_update",
    "resample",
]


class BadCountError(ValueError):
    """Requested particle count outside the configured [n_min, n_max]."""


class AllZeroWeightError(RuntimeError):
    """Every particle scored zero; the caller should reinitialize globally."""


class UpdateStatus(enum.Enum):
    OK = "ok"
    NO_INFO = "no_info"  # scan had no finite beams, weights untouched


@dataclass(frozen=True)
class MotionNoise:
    """Odometry-model noise gains (rot-trans-rot decomposition).

    alpha1: rotation noise from rotation; alpha2: rotation noise from
    translation; alpha3: translation noise from translation; alpha4:
    translation noise from rotation.
    """

    alpha1: float = 0.1
    alpha2: float = 0.1
    alpha3: float = 0.05
    alpha4: float = 0.05


@dataclass(frozen=True)
class LocalizerParams:
    n: int = 1000
    n_min: int = 200
    n_max: int = 5000
    noise: MotionNoise = MotionNoise()
    z_hit: float = 0.95
    z_rand: float = 0.05
    sigma_hit: float = 0.1
    subsample: int = 30

    def validate(self) -> None:
        if not (0 < self.n_min <= self.n <= self.n_max):
            raise BadCountError(
                f"need n_min <= n <= n_max, got {self.n_min}/{self.n}/{self.n_max}"
            )
        if self.sigma_hit <= 0 or self.subsample < 1:
            raise ValueError("sigma_hit must be positive, subsample >= 1")


@dataclass(frozen=True)
class Particle:
    pose: Pose2D
    weight: float


@dataclass(frozen=True)
class ParticleSet:
    """Vectorized particle storage: one row per particle.

    `poses` is (n, 3) of x, y, theta; `weights` is (n,). The `particles`
    property materializes the record view when object access reads better
    than array math.
    """

    poses: np.ndarray
    weights: np.ndarray
    normalized: bool

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def particles(self) -> tuple[Particle, ...]:
        return tuple(
            Particle(Pose2D(float(x), float(y), float(t)), float(w))
            for (x, y, t), w in zip(self.poses, self.weights)
        )


@dataclass(frozen=True)
class LikelihoodField:
    """Distance-to-nearest-obstacle cache over the map lattice."""

    resolution: float
    width: int
    height: int
    origin: Pose2D
    cells: np.ndarray  # (height, width) meters to the closest occupied cell

    def distance_at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Distance lookups; points off the lattice read as +inf."""
        ix = np.floor((np.asarray(x) - self.origin.x) / self.resolution).astype(int)
        iy = np.floor((np.asarray(y) - self.origin.y) / self.resolution).astype(int)
        inside = (ix >= 0) & (ix < self.width) & (iy >= 0) & (iy < self.height)
        out = np.full(np.shape(ix), np.inf)
        out[inside] = self.cells[iy[inside], ix[inside]]
        return out


def build_likelihood_field(occ: OccupancyGrid) -> LikelihoodField:
    occupied = occ.cells == int(CellState.OCCUPIED)
    if occupied.any():
        # EDT measures to the nearest zero of its input
        dist = ndimage.distance_transform_edt(~occupied) * occ.resolution
    else:
        dist = np.full(occ.cells.shape, np.inf)
    return LikelihoodField(
        resolution=occ.resolution,
        width=occ.width,
        height=occ.height,
        origin=occ.origin,
        cells=dist,
    )


def init_particles(
    estimate: Pose2D,
    sigma: tuple[float, float, float],
    n: int,
    seed: int,
    params: LocalizerParams = LocalizerParams(),
) -> ParticleSet:
    if not (params.n_min <= n <= params.n_max):
        raise BadCountError(
            f"n={n} outside [{params.n_min}, {params.n_max}]"
        )
    rng = np.random.default_rng(seed)
    poses = np.empty((n, 3))
    # scale 0 draws return the mean exactly, so degenerate sigmas stay exact
    poses[:, 0] = estimate.x + rng.normal(0.0, sigma[0], n)
    poses[:, 1] = estimate.y + rng.normal(0.0, sigma[1], n)
    poses[:, 2] = _wrap_rows(estimate.theta + rng.normal(0.0, sigma[2], n))
    weights = np.full(n, 1.0 / n)
    return ParticleSet(poses=poses, weights=weights, normalized=True)


def _wrap_rows(theta: np.ndarray) -> np.ndarray:
    """Wrap into (-pi, pi], touching only rows that left the range.

    In-range values pass through bit-identical, which keeps the zero-noise
    motion update an exact no-op.
    """
    theta = np.asarray(theta, dtype=float)
    out = np.where(
        (theta > math.pi) | (theta <= -math.pi),
        math.pi - np.mod(math.pi - theta, 2.0 * math.pi),
        theta,
    )
    return out


def motion_update(
    ps: ParticleSet,
    delta: OdometryDelta,
    noise_cfg: MotionNoise,
    seed: int,
) -> ParticleSet:
    """Advance every particle through the odometry model.

    The body-frame delta decomposes into an initial rotation toward the
    direction of travel, the translation, and a final rotation; each piece
    picks up zero-mean Gaussian noise scaled by the alpha gains.
    """
    if len(ps) == 0:
        raise ValueError("empty particle set")
    d = delta.delta
    trans = math.hypot(d.tx, d.ty)
    # pure turns have no meaningful travel direction
    rot1 = math.atan2(d.ty, d.tx) if trans > 1e-6 else 0.0
    rot2 = wrap_angle(d.rot - rot1)

    rng = np.random.default_rng(seed)
    n = len(ps)
    s1 = math.sqrt(noise_cfg.alpha1 * rot1**2 + noise_cfg.alpha2 * trans**2)
    s_t = math.sqrt(
        noise_cfg.alpha3 * trans**2 + noise_cfg.alpha4 * (rot1**2 + rot2**2)
    )
    s2 = math.sqrt(noise_cfg.alpha1 * rot2**2 + noise_cfg.alpha2 * trans**2)
    rot1_hat = rot1 + (rng.normal(0.0, s1, n) if s1 > 0 else 0.0)
    trans_hat = trans + (rng.normal(0.0, s_t, n) if s_t > 0 else 0.0)
    rot2_hat = rot2 + (rng.normal(0.0, s2, n) if s2 > 0 else 0.0)

    poses = ps.poses.copy()
    heading = poses[:, 2] + rot1_hat
    poses[:, 0] += trans_hat * np.cos(heading)
    poses[:, 1] += trans_hat * np.sin(heading)
    poses[:, 2] = _wrap_rows(heading + rot2_hat)
    return replace(ps, poses=poses)


def _select_beams(scan: LaserScan, subsample: int) -> np.ndarray:
    r = np.asarray(scan.ranges)
    finite = np.nonzero(np.isfinite(r))[0]
    if len(finite) == 0:
        return finite
    take = min(subsample, len(finite))
    sel = np.unique(
        finite[np.round(np.linspace(0, len(finite) - 1, take)).astype(int)]
    )
    return sel


def measurement_update(
    ps: ParticleSet,
    scan: LaserScan,
    field: LikelihoodField,
    subsample: int = 30,
    params: LocalizerParams = LocalizerParams(),
) -> tuple[ParticleSet, UpdateStatus]:
    """Reweight against the likelihood field and renormalize.

    Each sampled beam endpoint contributes
    z_hit * N(distance-to-obstacle; 0, sigma_hit) + z_rand / range_max.
    """
    sel = _select_beams(scan, subsample)
    if len(sel) == 0:
        return ps, UpdateStatus.NO_INFO

    r = np.asarray(scan.ranges)[sel]
    ang = scan.spec.angles()[sel]
    x, y, th = ps.poses[:, 0:1], ps.poses[:, 1:2], ps.poses[:, 2:3]
    beam = th + ang[None, :]  # (n, beams)
    ex = x + r[None, :] * np.cos(beam)
    ey = y + r[None, :] * np.sin(beam)
    dist = field.distance_at(ex, ey)

    norm = 1.0 / (params.sigma_hit * math.sqrt(2.0 * math.pi))
    p_hit = norm * np.exp(-0.5 * (dist / params.sigma_hit) ** 2)
    p_hit = np.where(np.isfinite(dist), p_hit, 0.0)
    p = params.z_hit * p_hit + params.z_rand / scan.spec.range_max
    weights = ps.weights * np.prod(p, axis=1)

    total = float(weights.sum())
    if total <= 0.0 or not math.isfinite(total):
        raise AllZeroWeightError("no particle explains the scan")
    return (
        replace(ps, weights=weights / total, normalized=True),
        UpdateStatus.OK,
    )


def effective_sample_size(ps: ParticleSet) -> float:
    w = ps.weights
    return float(1.0 / np.sum(w * w))


def resample(ps: ParticleSet, seed: int) -> ParticleSet:
    """Low-variance systematic resampling; weights come out uniform."""
    if not ps.normalized:
        raise ValueError("resample requires a normalized particle set")
    n = len(ps)
    rng = np.random.default_rng(seed)
    start = rng.uniform(0.0, 1.0 / n)
    pointers = start + np.arange(n) / n
    idx = np.searchsorted(np.cumsum(ps.weights), pointers, side="left")
    idx = np.minimum(idx, n - 1)  # guard the last cumsum rounding
    return ParticleSet(
        poses=ps.poses[idx].copy(),
        weights=np.full(n, 1.0 / n),
        normalized=True,
    )


def estimate(ps: ParticleSet) -> tuple[Pose2D, tuple[float, float, float]]:
    if not ps.normalized:
        raise ValueError("estimate requires a normalized particle set")
    w = ps.weights
    mx = float(np.dot(w, ps.poses[:, 0]))
    my = float(np.dot(w, ps.poses[:, 1]))
    th = ps.poses[:, 2]
    mth = math.atan2(float(np.dot(w, np.sin(th))), float(np.dot(w, np.cos(th))))
    dth = np.mod(th - mth + math.pi, 2 * math.pi) - math.pi
    cov = (
        float(np.dot(w, (ps.poses[:, 0] - mx) ** 2)),
        float(np.dot(w, (ps.poses[:, 1] - my) ** 2)),
        float(np.dot(w, dth**2)),
    )
    return Pose2D(mx, my, mth), cov
