"""Ground-truth quadrotor rigid-body model, rotor mixer, and world collision.

Frames and signs: world x east / y north / z up, body x forward / y left /
z up. Attitude is (roll, pitch, yaw) with the body-to-world rotation
``Rz(yaw) @ Ry(-pitch) @ Rx(-roll)``, so positive roll banks the vehicle
left (lift tilts toward +y) and positive pitch raises the nose (lift tilts
toward -x). Rotors are indexed FL, FR, RR, RL in X configuration; FL and RR
spin clockwise seen from above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

ROTOR_FL, ROTOR_FR, ROTOR_RR, ROTOR_RL = 0, 1, 2, 3

TOUCHDOWN_SPEED = 0.2  # m/s; faster descent into the floor is a crash


class UnallocatableError(Exception):
    """Torque demand exceeds what the thrust budget can allocate."""


class CrashError(Exception):
    """The vehicle left the recoverable flight envelope."""


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 1.5
    arm_length: float = 0.225
    inertia_diag: tuple[float, float, float] = (0.02, 0.02, 0.04)
    k_f: float = 1.3e-5
    k_m: float = 2.0e-7
    rotor_speed_max: float = 1000.0
    linear_drag: float = 0.3
    body_radius: float = 0.3
    gravity: float = 9.81

    def validate(self) -> list[str]:
        problems = []
        for name in (
            "mass",
            "arm_length",
            "k_f",
            "k_m",
            "rotor_speed_max",
            "linear_drag",
            "body_radius",
            "gravity",
        ):
            if getattr(self, name) <= 0:
                problems.append(f"vehicle.{name} must be > 0")
        if any(i <= 0 for i in self.inertia_diag):
            problems.append("vehicle.inertia_diag components must be > 0")
        if self.k_m >= self.k_f:
            problems.append("vehicle.k_m must be < vehicle.k_f")
        return problems

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.gravity


@dataclass(frozen=True)
class RigidBodyState:
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    attitude: tuple[float, float, float] = (0.0, 0.0, 0.0)  # roll, pitch, yaw
    body_rates: tuple[float, float, float] = (0.0, 0.0, 0.0)  # p, q, r
    time: float = 0.0


@dataclass(frozen=True)
class RotorSpeeds:
    omega: tuple[float, float, float, float]  # FL, FR, RR, RL, rad/s


@dataclass(frozen=True)
class WrenchCommand:
    thrust: float = 0.0  # N, total along body z
    torque_roll: float = 0.0
    torque_pitch: float = 0.0
    torque_yaw: float = 0.0


@dataclass(frozen=True)
class RectObstacle:
    id: str
    xmin: float
    ymin: float
    xmax: float
    ymax: float


@dataclass(frozen=True)
class CircleObstacle:
    id: str
    cx: float
    cy: float
    radius: float


Obstacle = RectObstacle | CircleObstacle


@dataclass(frozen=True)
class WorldModel:
    """Static planar world: a bounded room with rectangle/circle obstacles."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float
    obstacles: tuple[Obstacle, ...] = ()

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def validate(self) -> list[str]:
        problems = []
        if self.xmax <= self.xmin or self.ymax <= self.ymin:
            problems.append("world.bounds must have positive extent")
        for ob in self.obstacles:
            if isinstance(ob, RectObstacle):
                ok = (
                    ob.xmin < ob.xmax
                    and ob.ymin < ob.ymax
                    and ob.xmin >= self.xmin
                    and ob.xmax <= self.xmax
                    and ob.ymin >= self.ymin
                    and ob.ymax <= self.ymax
                )
            else:
                ok = ob.radius > 0 and (
                    self.xmin <= ob.cx - ob.radius
                    and ob.cx + ob.radius <= self.xmax
                    and self.ymin <= ob.cy - ob.radius
                    and ob.cy + ob.radius <= self.ymax
                )
            if not ok:
                problems.append(f"world.obstacles[{ob.id}] outside bounds or degenerate")
        return problems


@dataclass(frozen=True)
class CollisionReport:
    contact: bool
    shape_id: str | None = None  # obstacle id, or "bounds"


def mix(cmd: WrenchCommand, params: VehicleParams) -> RotorSpeeds:
    """Allocate a (thrust, torques) wrench onto four rotor speeds.

    Per-rotor force is k_f * omega^2. Roll torque comes from the right/left
    force differential at lever arm/sqrt(2), pitch from front/rear, yaw from
    the alternating-spin drag torques (k_m/k_f per newton of rotor force).
    Raises UnallocatableError when the solution needs a negative force.
    """
    if cmd.thrust < 0:
        raise UnallocatableError(f"thrust must be >= 0, got {cmd.thrust}")
    d = params.arm_length / math.sqrt(2.0)
    c = params.k_m / params.k_f
    quarter = cmd.thrust / 4.0
    r = cmd.torque_roll / (4.0 * d)
    p = cmd.torque_pitch / (4.0 * d)
    y = cmd.torque_yaw / (4.0 * c)
    forces = (
        quarter - r + p + y,  # FL
        quarter + r + p - y,  # FR
        quarter + r - p + y,  # RR
        quarter - r - p - y,  # RL
    )
    for i, f in enumerate(forces):
        if f < 0:
            raise UnallocatableError(
                f"rotor {i} would need negative force {f:.4f} N"
            )
    omega = tuple(
        min(math.sqrt(f / params.k_f), params.rotor_speed_max) for f in forces
    )
    return RotorSpeeds(omega)


def rotor_wrench(rotors: RotorSpeeds, params: VehicleParams) -> WrenchCommand:
    """Forward model: the wrench a set of rotor speeds actually produces."""
    f = [params.k_f * w * w for w in rotors.omega]
    d = params.arm_length / math.sqrt(2.0)
    c = params.k_m / params.k_f
    fl, fr, rr, rl = f
    return WrenchCommand(
        thrust=fl + fr + rr + rl,
        torque_roll=d * (fr + rr - fl - rl),
        torque_pitch=d * (fl + fr - rr - rl),
        torque_yaw=c * (fl - fr + rr - rl),
    )


def body_to_world(attitude: tuple[float, float, float]) -> list[list[float]]:
    """Rotation matrix Rz(yaw) @ Ry(-pitch) @ Rx(-roll)."""
    roll, pitch, yaw = attitude
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    # rows of Rz(yaw) @ Ry(-pitch) @ Rx(-roll)
    return [
        [cy * cp, cy * sp * sr - sy * cr, -cy * sp * cr - sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, -sy * sp * cr + cy * sr],
        [sp, -cp * sr, cp * cr],
    ]


def _wrap(a: float) -> float:
    r = (a + math.pi) % (2.0 * math.pi) - math.pi
    return math.pi if r <= -math.pi else r


def step_dynamics(
    state: RigidBodyState,
    rotors: RotorSpeeds,
    params: VehicleParams,
    dt: float,
) -> RigidBodyState:
    """One semi-implicit Euler step of the rigid-body model.

    Thrust acts along body z rotated into the world frame; gravity and a
    linear aerodynamic drag oppose motion; angular accelerations are
    torque / inertia about each body axis with small-angle Euler-rate
    kinematics (attitude integrates the body rates directly).
    """
    if not 0.0 < dt <= 0.02:
        raise ValueError(f"dt must be in (0, 0.02], got {dt}")
    w = rotor_wrench(rotors, params)
    rot = body_to_world(state.attitude)
    thrust_world = (rot[0][2] * w.thrust, rot[1][2] * w.thrust, rot[2][2] * w.thrust)

    m = params.mass
    vx, vy, vz = state.velocity
    ax = thrust_world[0] / m - params.linear_drag * vx / m
    ay = thrust_world[1] / m - params.linear_drag * vy / m
    az = thrust_world[2] / m - params.gravity - params.linear_drag * vz / m

    vx += ax * dt
    vy += ay * dt
    vz += az * dt
    x, y, z = state.position
    x += vx * dt
    y += vy * dt
    z += vz * dt

    ixx, iyy, izz = params.inertia_diag
    p, q, r = state.body_rates
    p += (w.torque_roll / ixx) * dt
    q += (w.torque_pitch / iyy) * dt
    r += (w.torque_yaw / izz) * dt
    roll, pitch, yaw = state.attitude
    roll = _wrap(roll + p * dt)
    pitch = _wrap(pitch + q * dt)
    yaw = _wrap(yaw + r * dt)

    if abs(roll) >= math.pi / 2 or abs(pitch) >= math.pi / 2:
        raise CrashError(
            f"attitude out of envelope at t={state.time + dt:.3f}s "
            f"(roll={roll:.3f}, pitch={pitch:.3f})"
        )
    if z < 0.0:
        if vz < -TOUCHDOWN_SPEED:
            raise CrashError(
                f"ground impact at t={state.time + dt:.3f}s with vz={vz:.3f} m/s"
            )
        z, vx, vy, vz = 0.0, 0.0, 0.0, 0.0  # gentle touchdown: landed

    return RigidBodyState(
        position=(x, y, z),
        velocity=(vx, vy, vz),
        attitude=(roll, pitch, yaw),
        body_rates=(p, q, r),
        time=state.time + dt,
    )


def _disc_hits_rect(x: float, y: float, r: float, ob: RectObstacle) -> bool:
    cx = min(max(x, ob.xmin), ob.xmax)
    cy = min(max(y, ob.ymin), ob.ymax)
    return (x - cx) ** 2 + (y - cy) ** 2 <= r * r


def check_collision(
    state: RigidBodyState, world: WorldModel, params: VehicleParams
) -> CollisionReport:
    """Body disc vs static obstacles and the room walls, boundary inclusive."""
    x, y, _ = state.position
    r = params.body_radius
    if (
        x - world.xmin <= r
        or world.xmax - x <= r
        or y - world.ymin <= r
        or world.ymax - y <= r
    ):
        return CollisionReport(True, "bounds")
    for ob in world.obstacles:
        if isinstance(ob, RectObstacle):
            if _disc_hits_rect(x, y, r, ob):
                return CollisionReport(True, ob.id)
        else:
            if (x - ob.cx) ** 2 + (y - ob.cy) ** 2 <= (r + ob.radius) ** 2:
                return CollisionReport(True, ob.id)
    return CollisionReport(False, None)


def landed(state: RigidBodyState) -> bool:
    return state.position[2] <= 0.0 and abs(state.velocity[2]) < 1e-9


def with_time(state: RigidBodyState, t: float) -> RigidBodyState:
    return replace(state, time=t)
