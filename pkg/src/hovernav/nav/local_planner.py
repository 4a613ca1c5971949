"""Dynamic-window local planner.

Samples (v, omega) pairs reachable under the acceleration limits within
one control period, forward-simulates each constant-twist arc over the
horizon, discards arcs that touch untraversable cost, and scores the rest
on heading to a lookahead waypoint, obstacle clearance, speed, and
cross-track distance to the path. Output is turtlebot-shaped: only
linear.x and angular.z are ever nonzero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..control import Twist
from ..geometry import Pose2D
from .costmap import INSCRIBED, UNKNOWN_COST, Costmap
from .global_planner import Path


class BlockedError(Exception):
    """Every sampled arc intersects untraversable cost within the horizon."""


@dataclass(frozen=True)
class DwaParams:
    v_max: float = 0.5
    v_min: float = 0.0
    omega_max: float = 1.5
    accel_v: float = 1.0  # m/s^2 window growth per control period
    accel_omega: float = 3.0  # rad/s^2
    sim_horizon: float = 1.5
    v_samples: int = 11
    omega_samples: int = 21
    control_period: float = 0.1
    sim_dt: float = 0.05
    lookahead: float = 0.5  # m along the path for the heading target
    # (heading, clearance, velocity, path) score weights
    weights: tuple[float, float, float, float] = (0.4, 0.2, 0.1, 0.3)

    def validate(self) -> list[str]:
        problems = []
        if self.v_max <= 0:
            problems.append("dwa.v_max must be > 0")
        if not 0 <= self.v_min <= self.v_max:
            problems.append("dwa.v_min must be in [0, v_max]")
        if self.omega_max <= 0:
            problems.append("dwa.omega_max must be > 0")
        if self.accel_v <= 0 or self.accel_omega <= 0:
            problems.append("dwa acceleration limits must be > 0")
        if self.sim_horizon <= 0:
            problems.append("dwa.sim_horizon must be > 0")
        if self.v_samples < 3 or self.omega_samples < 3:
            problems.append("dwa sample counts must be >= 3")
        if self.control_period <= 0 or self.sim_dt <= 0:
            problems.append("dwa.control_period and sim_dt must be > 0")
        if self.lookahead <= 0:
            problems.append("dwa.lookahead must be > 0")
        if any(w < 0 for w in self.weights):
            problems.append("dwa.weights must be >= 0")
        return problems


def _wrap_abs(a: np.ndarray) -> np.ndarray:
    return np.abs(np.mod(a + math.pi, 2.0 * math.pi) - math.pi)


def _polyline_distance(wp: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Min distance from each (px, py) point to the waypoint polyline."""
    pts = np.stack([px.ravel(), py.ravel()], axis=1)
    if len(wp) == 1:
        d = np.hypot(pts[:, 0] - wp[0, 0], pts[:, 1] - wp[0, 1])
        return d.reshape(px.shape)
    a = wp[:-1][None, :, :]
    seg = wp[1:][None, :, :] - a
    rel = pts[:, None, :] - a
    denom = np.maximum((seg * seg).sum(-1), 1e-12)
    tpar = np.clip((rel * seg).sum(-1) / denom, 0.0, 1.0)
    closest = a + tpar[..., None] * seg
    d = np.sqrt(((pts[:, None, :] - closest) ** 2).sum(-1)).min(axis=1)
    return d.reshape(px.shape)


def _lookahead_point(path: Path, pose: Pose2D, dist: float) -> tuple[float, float]:
    """Nearest waypoint at least `dist` ahead of the closest one."""
    wp = path.waypoints
    d = np.array([math.hypot(q.x - pose.x, q.y - pose.y) for q in wp])
    i0 = int(d.argmin())
    ahead = np.nonzero(d[i0:] >= dist)[0]
    j = i0 + int(ahead[0]) if ahead.size else len(wp) - 1
    return wp[j].x, wp[j].y


def plan_local(
    cm: Costmap,
    current: tuple[Pose2D, float, float],
    path: Path,
    p: DwaParams = DwaParams(),
) -> Twist:
    """Best admissible (v, omega) for the next control period as a Twist.

    Deterministic: samples are scored in (v-major, omega-minor) order and
    the first best wins.
    """
    pose, v_cur, w_cur = current
    if not path.waypoints:
        raise ValueError("path has no waypoints")
    problems = p.validate()
    if problems:
        raise ValueError("; ".join(problems))

    v_hi = min(p.v_max, v_cur + p.accel_v * p.control_period)
    v_lo = min(max(p.v_min, v_cur - p.accel_v * p.control_period), v_hi)
    w_hi = min(p.omega_max, w_cur + p.accel_omega * p.control_period)
    w_lo = min(max(-p.omega_max, w_cur - p.accel_omega * p.control_period), w_hi)
    vs = np.linspace(v_lo, v_hi, p.v_samples)
    ws = np.linspace(w_lo, w_hi, p.omega_samples)

    n = max(1, int(round(p.sim_horizon / p.sim_dt)))
    t = p.sim_dt * np.arange(1, n + 1)
    v3 = vs[:, None, None]
    w3 = ws[None, :, None]
    t3 = t[None, None, :]
    th0 = pose.theta
    turning = np.abs(w3) > 1e-9
    w_safe = np.where(turning, w3, 1.0)
    xs = np.where(
        turning,
        pose.x + v3 / w_safe * (np.sin(th0 + w3 * t3) - math.sin(th0)),
        pose.x + v3 * t3 * math.cos(th0),
    )
    ys = np.where(
        turning,
        pose.y - v3 / w_safe * (np.cos(th0 + w3 * t3) - math.cos(th0)),
        pose.y + v3 * t3 * math.sin(th0),
    )

    ix = np.floor((xs - cm.origin.x) / cm.resolution).astype(np.int64)
    iy = np.floor((ys - cm.origin.y) / cm.resolution).astype(np.int64)
    inside = (ix >= 0) & (ix < cm.width) & (iy >= 0) & (iy < cm.height)
    arc_cost = np.full(xs.shape, UNKNOWN_COST, dtype=np.int64)
    arc_cost[inside] = cm.cells[iy[inside], ix[inside]]
    blocked = (arc_cost >= INSCRIBED).any(axis=2)

    clearance = np.zeros(xs.shape)
    clearance[inside] = cm.distances[iy[inside], ix[inside]]
    cap = cm.params.inflation_radius
    s_clear = np.minimum(clearance.min(axis=2), cap) / cap

    lx, ly = _lookahead_point(path, pose, p.lookahead)
    xe, ye = xs[:, :, -1], ys[:, :, -1]
    th_end = th0 + ws[None, :] * t[-1]
    bearing = np.arctan2(ly - ye, lx - xe)
    s_head = 1.0 - _wrap_abs(bearing - th_end) / math.pi

    wp = np.array([[q.x, q.y] for q in path.waypoints])
    s_path = -_polyline_distance(wp, xe, ye)
    s_vel = (vs / p.v_max)[:, None]

    w_h, w_c, w_v, w_p = p.weights
    score = w_h * s_head + w_c * s_clear + w_v * s_vel + w_p * s_path
    score = np.where(blocked, -np.inf, score)
    if not np.isfinite(score).any():
        raise BlockedError(
            f"all {p.v_samples * p.omega_samples} arcs blocked near "
            f"({pose.x:.2f}, {pose.y:.2f})"
        )
    iv, iw = divmod(int(score.argmax()), p.omega_samples)
    return Twist.planar(float(vs[iv]), float(ws[iw]))
