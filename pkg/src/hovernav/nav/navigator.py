"""Goal-seeking state machine over the global and local planners.

Six states: IDLE, PLANNING, FOLLOWING, SUCCEEDED, FAILED, RECOVERING.
A goal moves the machine to PLANNING; a fresh global plan is followed
with DWA ticks; the path is re-planned when a costmap update lands
untraversable cost on any waypoint; a blocked local planner triggers a
timed rotate-in-place recovery (scan refresh) followed by a replan; three
consecutive replan failures end in FAILED. Errors surface in diagnostics
text, never as exceptions out of tick().
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass

from ..control import Twist
from ..geometry import Pose2D, wrap_angle
from .costmap import INSCRIBED, Costmap
from .global_planner import (
    GoalInCollisionError,
    Path,
    PlanningError,
    plan_global,
)
from .local_planner import BlockedError, DwaParams, plan_local


class NavState(enum.Enum):
    IDLE = "IDLE"
    PLANNING = "PLANNING"
    FOLLOWING = "FOLLOWING"
    SUCCEEDED = "SUCCEEDED"
    FAILED = "FAILED"
    RECOVERING = "RECOVERING"


@dataclass(frozen=True)
class NavTolerances:
    xy_tol: float = 0.15
    yaw_tol: float = math.radians(10.0)

    def validate(self) -> list[str]:
        problems = []
        if self.xy_tol <= 0:
            problems.append("nav.xy_tol must be > 0")
        if not 0 < self.yaw_tol <= math.pi:
            problems.append("nav.yaw_tol must be in (0, pi]")
        return problems


@dataclass(frozen=True)
class NavStatus:
    state: NavState
    active_goal: Pose2D | None
    diagnostics: str = ""


_TERMINAL = (NavState.IDLE, NavState.SUCCEEDED, NavState.FAILED)


class Navigator:
    """Carries the active goal, current path, and failure/recovery timers.

    tick() is the single entry point; it consumes the latest localized
    pose, measured planar velocity, and costmap, and returns the status
    plus the Twist to command. Deterministic given identical call
    sequences.
    """

    def __init__(
        self,
        dwa: DwaParams = DwaParams(),
        tolerances: NavTolerances = NavTolerances(),
        max_replan_failures: int = 3,
        recovery_duration: float = 2.0,
        recovery_omega: float = 0.75,
        slow_radius: float = 0.5,
    ):
        problems = dwa.validate() + tolerances.validate()
        if problems:
            raise ValueError("; ".join(problems))
        self.dwa = dwa
        self.tolerances = tolerances
        self.max_replan_failures = max_replan_failures
        self.recovery_duration = recovery_duration
        self.recovery_omega = recovery_omega
        self.slow_radius = slow_radius
        self._state = NavState.IDLE
        self._goal: Pose2D | None = None
        self._path: Path | None = None
        self._fails = 0
        self._plan_count = 0
        self._recover_until = 0.0
        self._recover_dir = 1.0
        self._diag = "idle"

    @property
    def status(self) -> NavStatus:
        return NavStatus(self._state, self._goal, self._diag)

    @property
    def path(self) -> Path | None:
        return self._path

    @property
    def plan_count(self) -> int:
        """Successful global plans since the goal was set; >1 means replans."""
        return self._plan_count

    def set_goal(self, goal: Pose2D) -> NavStatus:
        self._goal = goal
        self._path = None
        self._fails = 0
        self._plan_count = 0
        self._state = NavState.PLANNING
        self._diag = f"goal received ({goal.x:.2f}, {goal.y:.2f})"
        return self.status

    def cancel(self) -> NavStatus:
        self._goal = None
        self._path = None
        self._fails = 0
        self._state = NavState.IDLE
        self._diag = "cancelled"
        return self.status

    def _at_goal_xy(self, pose: Pose2D) -> bool:
        g = self._goal
        return math.hypot(pose.x - g.x, pose.y - g.y) <= self.tolerances.xy_tol

    def _yaw_error(self, pose: Pose2D) -> float:
        return wrap_angle(self._goal.theta - pose.theta)

    def _path_invalidated(self, cm: Costmap) -> bool:
        return any(
            cm.cost_at(q.x, q.y) >= INSCRIBED for q in self._path.waypoints
        )

    def tick(
        self,
        pose: Pose2D,
        velocity: tuple[float, float],
        cm: Costmap,
        now: float,
    ) -> tuple[NavStatus, Twist]:
        # bounded passes let PLANNING fall through to FOLLOWING in one tick
        for _ in range(3):
            if self._state in _TERMINAL:
                return self.status, Twist()

            if self._at_goal_xy(pose):
                yaw_err = self._yaw_error(pose)
                if abs(yaw_err) <= self.tolerances.yaw_tol:
                    self._state = NavState.SUCCEEDED
                    self._path = None
                    self._diag = "goal reached"
                    return self.status, Twist()
                # inside the position tolerance: align yaw in place
                wz = math.copysign(
                    min(0.5 * self.dwa.omega_max, 1.5 * abs(yaw_err)), yaw_err
                )
                self._diag = "aligning final yaw"
                return self.status, Twist.planar(0.0, wz)

            if self._state is NavState.RECOVERING:
                if now < self._recover_until:
                    return self.status, Twist.planar(
                        0.0, self._recover_dir * self.recovery_omega
                    )
                self._state = NavState.PLANNING
                self._diag = "recovery finished, replanning"
                continue

            if self._state is NavState.PLANNING:
                try:
                    self._path = plan_global(cm, pose, self._goal)
                except GoalInCollisionError as exc:
                    self._state = NavState.FAILED
                    self._diag = f"GoalInCollision: {exc}"
                    return self.status, Twist()
                except PlanningError as exc:
                    self._fails += 1
                    self._diag = (
                        f"replan failed "
                        f"({self._fails}/{self.max_replan_failures}): {exc}"
                    )
                    if self._fails >= self.max_replan_failures:
                        self._state = NavState.FAILED
                    return self.status, Twist()
                self._fails = 0
                self._plan_count += 1
                self._state = NavState.FOLLOWING
                self._diag = f"following {len(self._path.waypoints)} waypoints"
                continue

            # FOLLOWING
            if self._path_invalidated(cm):
                self._state = NavState.PLANNING
                self._diag = "path invalidated by costmap update"
                continue
            try:
                tw = plan_local(
                    cm, (pose, velocity[0], velocity[1]), self._path,
                    self._near_goal_params(pose),
                )
            except BlockedError as exc:
                self._state = NavState.RECOVERING
                self._recover_until = now + self.recovery_duration
                self._recover_dir = self._turn_direction(pose)
                self._diag = f"blocked, rotating to refresh: {exc}"
                return self.status, Twist.planar(
                    0.0, self._recover_dir * self.recovery_omega
                )
            return self.status, tw

        return self.status, Twist()

    def _near_goal_params(self, pose: Pose2D) -> DwaParams:
        """Taper the speed cap inside slow_radius so arrival is catchable."""
        dist = math.hypot(pose.x - self._goal.x, pose.y - self._goal.y)
        if dist >= self.slow_radius:
            return self.dwa
        cap = max(0.15, self.dwa.v_min, self.dwa.v_max * dist / self.slow_radius)
        return dataclasses.replace(self.dwa, v_max=min(self.dwa.v_max, cap))

    def _turn_direction(self, pose: Pose2D) -> float:
        bearing = math.atan2(self._goal.y - pose.y, self._goal.x - pose.x)
        err = wrap_angle(bearing - pose.theta)
        return 1.0 if err >= 0 else -1.0
