"""Fixed-step, single-threaded simulation core.

One Simulation owns the vehicle state, the controller cascade, the
estimators, and the navigator, and advances them in a strict per-step
order: control tick, rigid-body dynamics, collision check, sensor tick,
publish.  Control runs every 10th physics step (50 Hz), sensing every
50th (10 Hz), both firing on step 0.  All randomness derives from the
scenario seed through per-stream counters, so a (scenario, command
sequence) pair reproduces every published message bit for bit.

Two modes mirror the survey-then-navigate workflow: MAPPING runs SLAM
off teleop flight; NAVIGATION localizes against a saved map and runs
the planner stack.  Switching modes re-spawns the drone at the scenario
start pose.  The map frame is anchored at that start pose (the SLAM
origin), so saved maps, goals, and estimates all share one frame across
both phases.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from ..control import (
    ControllerBank,
    Twist,
    allocate_rotors,
    attitude_loop,
    takeoff_sequencer,
    twist_to_setpoints,
)
from ..geometry import (
    Pose2D,
    Transform2D,
    compose,
    compose_pose,
    invert,
    pose_delta,
)
from ..localize import (
    AllZeroWeightError,
    ParticleSet,
    build_likelihood_field,
    effective_sample_size,
    estimate,
    init_particles,
    measurement_update,
    motion_update,
    resample,
)
from ..mapping import SlamState, slam_tick, to_occupancy
from ..nav import NavState, NavStatus, Navigator, build_costmap
from ..sensing import (
    DegenerateScanError,
    OdometryDelta,
    laser_odometry,
    raycast_scan,
)
from ..vehicle import (
    CrashError,
    RigidBodyState,
    RotorSpeeds,
    check_collision,
    step_dynamics,
)
from .bus import TopicBus
from .maps import load_map, save_map
from .scenario import Mode, Scenario, _build_world

__all__ = [
    "SimClock",
    "SimSnapshot",
    "Simulation",
    "step_sim",
]

# seed-stream ids: every random draw mixes (seed, stream, counter)
_STREAM_LIDAR = 0
_STREAM_AMCL_MOTION = 1
_STREAM_AMCL_RESAMPLE = 2
_STREAM_AMCL_INIT = 3

_NAV_ACTIVE = (NavState.PLANNING, NavState.FOLLOWING, NavState.RECOVERING)
_INIT_SIGMA = (0.25, 0.25, math.radians(10.0))


@dataclass
class SimClock:
    """Step counter with fixed divisors; all rates divide the physics rate."""

    physics_dt: float = 0.002
    control_div: int = 10
    sensor_div: int = 50
    step: int = 0

    @property
    def now(self) -> float:
        return self.step * self.physics_dt

    @property
    def control_dt(self) -> float:
        return self.physics_dt * self.control_div

    def validate(self) -> list[str]:
        problems = []
        if self.physics_dt <= 0 or self.physics_dt > 0.02:
            problems.append("clock.physics_dt must be in (0, 0.02]")
        if self.control_div < 1 or self.sensor_div < 1:
            problems.append("clock divisors must be >= 1")
        return problems


@dataclass(frozen=True)
class SimSnapshot:
    """Immutable view of everything the cockpit or a driver reads."""

    now: float
    step: int
    mode: Mode
    status: str  # "running" or "crashed"
    crash_reason: str
    truth: RigidBodyState
    truth_map: Pose2D
    odom: Pose2D
    slam: Pose2D | None
    amcl: Pose2D | None
    amcl_cov: tuple[float, float, float] | None
    nav: NavStatus | None
    airborne: bool
    in_contact: bool
    collisions: int
    map_version: int
    active_source: str
    commanded: Twist


class Simulation:
    """Owner of all mutable run state; advance with step()."""

    def __init__(self, scenario: Scenario, clock: SimClock | None = None):
        self.scenario = scenario
        self.clock = clock if clock is not None else SimClock()
        problems = self.clock.validate()
        if problems:
            raise ValueError("; ".join(problems))
        self.bus = TopicBus()
        self.world = scenario.world
        self.mode = scenario.mode
        self.status = "running"
        self.crash_reason = ""
        self.collisions = 0
        self.map_version = 0
        self._scan_index = 0
        self._init_count = 0
        self._active_source = "teleop"

        # navigation-phase assets, populated by _enter_navigation
        self._costmap = None
        self._field = None
        self._map_grid = None
        self._particles: ParticleSet | None = None
        self._amcl_pose: Pose2D | None = None
        self._amcl_cov: tuple[float, float, float] | None = None
        self._navigator: Navigator | None = None

        self._slam: SlamState | None = None
        self._respawn()
        if self.mode is Mode.MAPPING:
            self._enter_mapping()
        else:
            self._enter_navigation(scenario.map_path)

    # ------------------------------------------------------------------
    # lifecycle

    def _respawn(self) -> None:
        """Grounded at the scenario start pose with quiet controllers."""
        s = self.scenario.start
        self._truth = RigidBodyState(
            position=(s.x, s.y, 0.0),
            attitude=(0.0, 0.0, s.theta),
            time=self.clock.now,
        )
        self._loops = ControllerBank(cfg=self.scenario.controllers)
        self._rotors = RotorSpeeds((0.0, 0.0, 0.0, 0.0))
        self._teleop = Twist()
        self._nav_twist = Twist()
        self._prev_scan = None
        self._odom = Pose2D(0.0, 0.0, 0.0)
        self._in_contact = False

    def _enter_mapping(self) -> None:
        self._slam = SlamState(params=self.scenario.slam)
        self._costmap = None
        self._field = None
        self._map_grid = None
        self._particles = None
        self._amcl_pose = None
        self._amcl_cov = None
        self._navigator = None

    def _enter_navigation(self, map_path: str | None) -> None:
        if map_path is None:
            raise ValueError("NAVIGATION requires a map_path")
        occ = load_map(map_path)
        self._map_grid = occ
        self._costmap = build_costmap(occ, self.scenario.nav.costmap)
        self._field = build_likelihood_field(occ)
        self._slam = None
        nav_cfg = self.scenario.nav
        self._navigator = Navigator(dwa=nav_cfg.dwa, tolerances=nav_cfg.tolerances)
        self._init_localizer(Pose2D(0.0, 0.0, 0.0), _INIT_SIGMA)
        self.map_version += 1
        self.bus.publish("grid_snapshot", (self.map_version, occ), source="sim")
        self.bus.publish(
            "costmap_snapshot", (self.map_version, self._costmap), source="sim"
        )

    def _init_localizer(self, center: Pose2D, sigma) -> None:
        p = self.scenario.amcl
        seed = self._derive_seed(_STREAM_AMCL_INIT, self._init_count)
        self._init_count += 1
        self._particles = init_particles(center, tuple(sigma), p.n, seed, p)
        self._amcl_pose, self._amcl_cov = estimate(self._particles)

    def _derive_seed(self, stream: int, index: int) -> int:
        ss = np.random.SeedSequence((self.scenario.seed, stream, index))
        return int(ss.generate_state(1)[0])

    # ------------------------------------------------------------------
    # per-step pieces

    def _truth_planar(self) -> Pose2D:
        x, y, _ = self._truth.position
        return Pose2D(x, y, self._truth.attitude[2])

    def truth_in_map(self) -> Pose2D:
        t = pose_delta(self.scenario.start, self._truth_planar())
        return Pose2D(t.tx, t.ty, t.rot)

    def _pick_twist(self) -> tuple[Twist, str]:
        if (
            self.mode is Mode.NAVIGATION
            and self._navigator is not None
            and self._navigator.status.state in _NAV_ACTIVE
        ):
            return self._nav_twist, "nav"
        return self._teleop, "teleop"

    def _control_tick(self) -> None:
        dt = self.clock.control_dt
        cmd, source = self._pick_twist()
        self._active_source = source
        cfg = self._loops.cfg
        if self._loops.airborne:
            sp = twist_to_setpoints(cmd, self._truth, cfg, self._loops, dt)
        else:
            sp, _ = takeoff_sequencer(self._truth, cfg.altitude_set, self._loops, dt)
        wrench = attitude_loop(sp, self._truth, self._loops, dt)
        self._rotors = allocate_rotors(wrench, self.scenario.vehicle)
        self.bus.publish("twist_cmd", cmd, source=source)

    def _clamp_to_walls(self) -> None:
        """Room walls are solid: the body disc cannot leave the bounds.

        Outward velocity dies at contact; obstacles only record contact
        so a clipped pillar cannot wedge the sensor inside geometry.
        """
        r = self.scenario.vehicle.body_radius
        w = self.world
        x, y, z = self._truth.position
        vx, vy, vz = self._truth.velocity
        nx = min(max(x, w.xmin + r), w.xmax - r)
        ny = min(max(y, w.ymin + r), w.ymax - r)
        if nx != x:
            vx = 0.0
        if ny != y:
            vy = 0.0
        if nx != x or ny != y:
            self._truth = RigidBodyState(
                position=(nx, ny, z),
                velocity=(vx, vy, vz),
                attitude=self._truth.attitude,
                body_rates=self._truth.body_rates,
                time=self._truth.time,
            )

    def _collision_tick(self) -> None:
        report = check_collision(self._truth, self.world, self.scenario.vehicle)
        if report.contact and not self._in_contact:
            self.collisions += 1
        self._in_contact = report.contact

    def _odometry_delta(self, scan) -> OdometryDelta:
        if self._prev_scan is None:
            return OdometryDelta(
                delta=Transform2D(), covariance_diag=(0.0, 0.0, 0.0), degraded=True
            )
        try:
            return laser_odometry(self._prev_scan, scan, Transform2D())
        except DegenerateScanError:
            return OdometryDelta(
                delta=Transform2D(), covariance_diag=(0.0, 0.0, 0.0), degraded=True
            )

    def _sensor_tick(self) -> None:
        seed = self._derive_seed(_STREAM_LIDAR, self._scan_index)
        scan = raycast_scan(
            self.world, self._truth_planar(), self.scenario.lidar, seed, self.clock.now
        )
        delta = self._odometry_delta(scan)
        self._odom = compose_pose(self._odom, delta.delta)
        self.bus.publish("scan", scan, source="sim")

        if self.mode is Mode.MAPPING:
            assert self._slam is not None
            pose, grid = slam_tick(self._slam, delta, scan)
            self.map_version += 1
            self.bus.publish("slam_pose", pose, source="sim")
            self.bus.publish(
                "grid_snapshot",
                (self.map_version, to_occupancy(grid)),
                source="sim",
            )
        else:
            self._amcl_cycle(delta, scan)
            self._nav_tick()
        self._publish_transforms()
        self._prev_scan = scan
        self._scan_index += 1

    def _amcl_cycle(self, delta: OdometryDelta, scan) -> None:
        assert self._particles is not None and self._field is not None
        p = self.scenario.amcl
        seed_m = self._derive_seed(_STREAM_AMCL_MOTION, self._scan_index)
        ps = motion_update(self._particles, delta, p.noise, seed_m)
        try:
            ps, _status = measurement_update(ps, scan, self._field, p.subsample, p)
        except AllZeroWeightError:
            # keep the prior; only reachable with z_rand == 0
            pass
        if effective_sample_size(ps) < len(ps) / 2.0:
            seed_r = self._derive_seed(_STREAM_AMCL_RESAMPLE, self._scan_index)
            ps = resample(ps, seed_r)
        self._particles = ps
        self._amcl_pose, self._amcl_cov = estimate(ps)
        self.bus.publish("amcl_pose", (self._amcl_pose, self._amcl_cov), source="sim")

    def _nav_tick(self) -> None:
        assert self._navigator is not None and self._costmap is not None
        assert self._amcl_pose is not None
        yaw = self._truth.attitude[2]
        vx, vy, _ = self._truth.velocity
        v_body = math.cos(yaw) * vx + math.sin(yaw) * vy
        omega = self._truth.body_rates[2]
        before = self._navigator.path
        status, twist = self._navigator.tick(
            self._amcl_pose, (v_body, omega), self._costmap, self.clock.now
        )
        self._nav_twist = twist
        if self._navigator.path is not before:
            self.bus.publish("path", self._navigator.path, source="sim")
        self.bus.publish("nav_status", status, source="sim")
        self.bus.publish("twist_cmd", twist, source="nav")

    def _publish_transforms(self) -> None:
        """Frame tree map -> odom -> base_link -> lidar_link.

        map->odom absorbs the estimator correction on top of dead
        reckoning: T_map_odom = T_map_base o T_odom_base^-1.
        """
        est = self._slam.pose if self._slam is not None else self._amcl_pose
        if est is None:
            return
        t_mo = compose(
            Transform2D.from_pose(est),
            invert(Transform2D.from_pose(self._odom)),
        )
        self.bus.publish(
            "transform_updates",
            {
                "stamp": self.clock.now,
                "map_odom": (t_mo.tx, t_mo.ty, t_mo.rot),
                "odom_base": (self._odom.x, self._odom.y, self._odom.theta),
                "base_lidar": (0.0, 0.0, 0.0),
            },
            source="sim",
        )

    # ------------------------------------------------------------------
    # public surface

    @property
    def scan_count(self) -> int:
        return self._scan_index

    @property
    def nav_path(self):
        return self._navigator.path if self._navigator is not None else None

    @property
    def nav_plan_count(self) -> int:
        return self._navigator.plan_count if self._navigator is not None else 0

    @property
    def slam_grid(self):
        return self._slam.grid if self._slam is not None else None

    @property
    def particles(self) -> ParticleSet | None:
        return self._particles

    def step(self, n_physics_steps: int) -> SimSnapshot:
        for _ in range(max(0, int(n_physics_steps))):
            if self.status != "running":
                break
            s = self.clock.step
            if s % self.clock.control_div == 0:
                self._control_tick()
            try:
                self._truth = step_dynamics(
                    self._truth, self._rotors, self.scenario.vehicle,
                    self.clock.physics_dt,
                )
            except CrashError as e:
                self.status = "crashed"
                self.crash_reason = str(e)
                self.clock.step += 1
                break
            self._clamp_to_walls()
            self._collision_tick()
            if s % self.clock.sensor_div == 0:
                self._sensor_tick()
            self.bus.publish("truth_state", self._truth, source="sim")
            self.clock.step += 1
        return self.snapshot()

    def snapshot(self) -> SimSnapshot:
        nav_status = self._navigator.status if self._navigator is not None else None
        slam_pose = (
            self._slam.pose if self._slam is not None and self._slam.initialized
            else None
        )
        return SimSnapshot(
            now=self.clock.now,
            step=self.clock.step,
            mode=self.mode,
            status=self.status,
            crash_reason=self.crash_reason,
            truth=self._truth,
            truth_map=self.truth_in_map(),
            odom=self._odom,
            slam=slam_pose,
            amcl=self._amcl_pose,
            amcl_cov=self._amcl_cov,
            nav=nav_status,
            airborne=self._loops.airborne,
            in_contact=self._in_contact,
            collisions=self.collisions,
            map_version=self.map_version,
            active_source=self._active_source,
            commanded=self._pick_twist()[0],
        )

    def command(self, doc: dict) -> dict:
        """Apply one command; replies {ok: True, ...} or {ok: False, error}.

        Commands are applied between physics steps by the loop owner, so
        their effect lands at a deterministic step boundary.
        """
        try:
            if not isinstance(doc, dict) or "cmd" not in doc:
                return {"ok": False, "error": "command must carry a 'cmd' key"}
            return self._dispatch(doc)
        except Exception as e:  # never let a bad command kill the loop
            return {"ok": False, "error": f"{type(e).__name__}: {e}"}

    def _dispatch(self, doc: dict) -> dict:
        cmd = doc["cmd"]
        if cmd == "teleop_twist":
            vx = float(doc.get("vx", 0.0))
            omega = float(doc.get("omega", 0.0))
            if not (math.isfinite(vx) and math.isfinite(omega)):
                return {"ok": False, "error": "teleop_twist needs finite vx, omega"}
            self._teleop = Twist.planar(vx, omega)
            return {"ok": True}
        if cmd == "set_goal":
            if self.mode is not Mode.NAVIGATION or self._navigator is None:
                return {"ok": False, "error": "set_goal requires NAVIGATION mode"}
            goal = Pose2D(float(doc["x"]), float(doc["y"]), float(doc.get("theta", 0.0)))
            status = self._navigator.set_goal(goal)
            return {"ok": True, "state": status.state.value}
        if cmd == "cancel_goal":
            if self._navigator is None:
                return {"ok": False, "error": "no navigator active"}
            self._navigator.cancel()
            self._nav_twist = Twist()
            return {"ok": True}
        if cmd == "set_initial_pose":
            if self.mode is not Mode.NAVIGATION:
                return {"ok": False, "error": "set_initial_pose requires NAVIGATION mode"}
            center = Pose2D(
                float(doc["x"]), float(doc["y"]), float(doc.get("theta", 0.0))
            )
            sigma = doc.get("sigma", _INIT_SIGMA)
            if not (isinstance(sigma, (list, tuple)) and len(sigma) == 3):
                return {"ok": False, "error": "sigma must be [sx, sy, stheta]"}
            self._init_localizer(center, tuple(float(v) for v in sigma))
            return {"ok": True}
        if cmd == "set_mode":
            return self._cmd_set_mode(doc)
        if cmd == "save_map":
            return self._cmd_save_map(doc)
        if cmd == "reset":
            self._respawn()
            self.collisions = 0
            if self.mode is Mode.MAPPING:
                self._enter_mapping()
            else:
                if self._navigator is not None:
                    self._navigator.cancel()
                self._init_localizer(Pose2D(0.0, 0.0, 0.0), _INIT_SIGMA)
            return {"ok": True}
        if cmd == "swap_world":
            return self._cmd_swap_world(doc)
        return {"ok": False, "error": f"unknown command {cmd!r}"}

    def _cmd_set_mode(self, doc: dict) -> dict:
        try:
            mode = Mode(doc.get("mode"))
        except ValueError:
            return {"ok": False, "error": f"unknown mode {doc.get('mode')!r}"}
        map_path = doc.get("map_path", self.scenario.map_path)
        if mode is Mode.NAVIGATION and map_path is None:
            return {"ok": False, "error": "NAVIGATION requires map_path"}
        self.mode = mode
        self._respawn()
        if mode is Mode.MAPPING:
            self._enter_mapping()
        else:
            self._enter_navigation(map_path)
        return {"ok": True, "mode": mode.value}

    def _cmd_save_map(self, doc: dict) -> dict:
        if self._slam is None or self._slam.grid is None:
            return {"ok": False, "error": "no map yet: save_map needs MAPPING scans"}
        path = doc.get("path")
        if not path:
            return {"ok": False, "error": "save_map needs a path"}
        pgm, yaml_path = save_map(self._slam.grid, path)
        return {"ok": True, "pgm": str(pgm), "yaml": str(yaml_path)}

    def _cmd_swap_world(self, doc: dict) -> dict:
        problems: list[str] = []
        world = _build_world(doc.get("world"), problems)
        if problems or world is None:
            return {"ok": False, "error": "; ".join(problems) or "world block missing"}
        self.world = world
        map_path = doc.get("map_path")
        if map_path is not None:
            occ = load_map(map_path)
            self._map_grid = occ
            self._costmap = build_costmap(occ, self.scenario.nav.costmap)
            self._field = build_likelihood_field(occ)
        self.map_version += 1
        if self._map_grid is not None:
            self.bus.publish(
                "grid_snapshot", (self.map_version, self._map_grid), source="sim"
            )
        if self._costmap is not None:
            self.bus.publish(
                "costmap_snapshot", (self.map_version, self._costmap), source="sim"
            )
        return {"ok": True, "map_version": self.map_version}

    def state_hash(self) -> str:
        """SHA-256 over every piece of evolving state; determinism probe."""
        h = hashlib.sha256()
        st = self._truth
        h.update(struct.pack(
            "<13d", *st.position, *st.velocity, *st.attitude, *st.body_rates, st.time
        ))
        h.update(struct.pack("<4d", *self._rotors.omega))
        h.update(struct.pack("<3d", self._odom.x, self._odom.y, self._odom.theta))
        h.update(struct.pack(
            "<6d", *self._teleop.linear, *self._teleop.angular
        ))
        h.update(self.mode.value.encode())
        h.update(self.status.encode())
        h.update(struct.pack(
            "<5q", self.clock.step, self._scan_index, self.collisions,
            self.map_version, self._init_count,
        ))
        if self._slam is not None and self._slam.grid is not None:
            g = self._slam.grid
            p = self._slam.pose
            h.update(struct.pack("<3d", p.x, p.y, p.theta))
            h.update(struct.pack("<2q2d", g.width, g.height, g.origin.x, g.origin.y))
            h.update(np.ascontiguousarray(g.cells).tobytes())
        if self._particles is not None:
            h.update(np.ascontiguousarray(self._particles.poses).tobytes())
            h.update(np.ascontiguousarray(self._particles.weights).tobytes())
        if self._navigator is not None:
            h.update(self._navigator.status.state.value.encode())
            path = self._navigator.path
            if path is not None:
                h.update(struct.pack("<d", path.cost))
        return h.hexdigest()


def step_sim(sim: Simulation, n_physics_steps: int) -> SimSnapshot:
    """Advance the loop n physics steps and return the resulting snapshot."""
    return sim.step(n_physics_steps)
