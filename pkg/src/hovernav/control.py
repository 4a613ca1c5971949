"""Velocity-command flight control: PID cascade plus the planar Twist bridge.

The planar autonomy stack treats the drone like a ground robot and emits
velocity commands. This module closes the gap to rotor level in two stages:

* outer loops (altitude hold, body-velocity tracking) run at the command
  rate and produce an AttitudeSetpoint; forward velocity maps to a nose-down
  (negative) pitch target, leftward velocity to a positive roll target, and
  commanded vertical velocity is ignored because the hover altitude is fixed;
* inner loops (roll/pitch angle, yaw rate) run at the physics rate and
  produce a WrenchCommand for the rotor mixer.

Thrust carries a weight feedforward and is scaled by 1/(cos roll * cos pitch)
so the vertical component stays constant while tilted. Every loop is a plain
positional PID with derivative-on-error (zero on the first step) and a
clamped integral.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .vehicle import (
    RigidBodyState,
    RotorSpeeds,
    UnallocatableError,
    VehicleParams,
    WrenchCommand,
    body_to_world,
    mix,
)


class NotAirborneError(Exception):
    """Velocity commands are only honored once altitude hold is engaged."""


def _clamp(x: float, limit: float) -> float:
    if x > limit:
        return limit
    if x < -limit:
        return -limit
    return x


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float
    i_limit: float  # anti-windup clamp on the integral term (error * s)
    output_limit: float  # symmetric clamp on the loop output

    def validate(self) -> list[str]:
        problems = []
        if self.kp < 0 or self.ki < 0 or self.kd < 0:
            problems.append("gains kp, ki, kd must be >= 0")
        if self.i_limit <= 0 or self.output_limit <= 0:
            problems.append("i_limit and output_limit must be > 0")
        return problems


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    initialized: bool = False


def pid_step(
    gains: PidGains,
    st: PidState,
    setpoint: float,
    measured: float,
    dt: float,
) -> tuple[float, PidState]:
    """One PID update; returns (output, next state).

    Derivative acts on the error and is defined as zero on the first call
    so a fresh controller never kicks. The integral saturates at i_limit
    before the output clamp is applied.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    error = setpoint - measured
    integral = _clamp(st.integral + error * dt, gains.i_limit)
    derivative = (error - st.prev_error) / dt if st.initialized else 0.0
    output = _clamp(
        gains.kp * error + gains.ki * integral + gains.kd * derivative,
        gains.output_limit,
    )
    return output, PidState(integral=integral, prev_error=error, initialized=True)


@dataclass(frozen=True)
class Twist:
    """Planar-robot style velocity command: linear m/s, angular rad/s."""

    linear: tuple[float, float, float] = (0.0, 0.0, 0.0)
    angular: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def validate(self) -> list[str]:
        vals = (*self.linear, *self.angular)
        if all(math.isfinite(v) for v in vals):
            return []
        return ["twist components must be finite"]

    @staticmethod
    def planar(vx: float, wz: float) -> "Twist":
        return Twist(linear=(vx, 0.0, 0.0), angular=(0.0, 0.0, wz))


@dataclass(frozen=True)
class AttitudeSetpoint:
    thrust: float  # N, along body z
    roll_set: float  # rad
    pitch_set: float  # rad
    yaw_rate_set: float  # rad/s
    altitude_set: float  # m, the hover altitude being held


@dataclass(frozen=True)
class BridgeConfig:
    """Gains and limits for the whole cascade, normally read from YAML.

    The shipped defaults lean overdamped: altitude ~0.75 damping ratio on a
    1.5 kg frame, attitude loops overdamped with ~0.2 s dominant time
    constant, velocity loop pole near 2.5 rad/s. Output limits keep the
    mixer allocatable near hover (yaw torque above ~0.22 N*m would starve a
    rotor at hover thrust).
    """

    mass: float = 1.5
    gravity: float = 9.81
    altitude_set: float = 1.0
    max_tilt: float = 0.25  # rad, clamp on roll/pitch setpoints
    hold_confirm: float = 0.5  # s inside thresholds before takeoff -> HOLD
    altitude: PidGains = PidGains(8.0, 2.0, 5.0, i_limit=1.0, output_limit=20.0)
    attitude: PidGains = PidGains(4.0, 0.5, 1.0, i_limit=0.5, output_limit=1.5)
    yaw_rate: PidGains = PidGains(2.0, 0.2, 0.0, i_limit=0.5, output_limit=0.2)
    velocity: PidGains = PidGains(0.25, 0.05, 0.0, i_limit=0.4, output_limit=0.25)

    def validate(self) -> list[str]:
        problems = []
        if self.mass <= 0:
            problems.append("bridge.mass must be > 0")
        if self.gravity <= 0:
            problems.append("bridge.gravity must be > 0")
        if self.altitude_set <= 0:
            problems.append("bridge.altitude_set must be > 0")
        if not 0 < self.max_tilt < math.pi / 2:
            problems.append("bridge.max_tilt must be in (0, pi/2)")
        if self.hold_confirm <= 0:
            problems.append("bridge.hold_confirm must be > 0")
        for name in ("altitude", "attitude", "yaw_rate", "velocity"):
            problems += [f"{name}: {p}" for p in getattr(self, name).validate()]
        return problems


@dataclass
class ControllerBank:
    """All loop states plus the held command; owned by the runtime loop."""

    cfg: BridgeConfig = field(default_factory=BridgeConfig)
    altitude: PidState = field(default_factory=PidState)
    roll: PidState = field(default_factory=PidState)
    pitch: PidState = field(default_factory=PidState)
    yaw_rate: PidState = field(default_factory=PidState)
    vel_x: PidState = field(default_factory=PidState)
    vel_y: PidState = field(default_factory=PidState)
    commanded: Twist = field(default_factory=Twist)
    airborne: bool = False
    hold_time: float = 0.0


def reset_controllers(loops: ControllerBank) -> ControllerBank:
    """Fresh bank with the same config: zero integrals, zero commanded Twist.

    Startup therefore demands zero velocity until someone commands otherwise.
    """
    return ControllerBank(cfg=loops.cfg)


def _body_velocity(state: RigidBodyState) -> tuple[float, float]:
    # world -> body is the transpose; only the planar components feed loops
    r = body_to_world(state.attitude)
    vx, vy, vz = state.velocity
    return (
        r[0][0] * vx + r[1][0] * vy + r[2][0] * vz,
        r[0][1] * vx + r[1][1] * vy + r[2][1] * vz,
    )


def _outer_loops(
    cmd: Twist,
    state: RigidBodyState,
    cfg: BridgeConfig,
    loops: ControllerBank,
    dt: float,
    altitude_set: float,
) -> AttitudeSetpoint:
    vbx, vby = _body_velocity(state)
    u_x, loops.vel_x = pid_step(cfg.velocity, loops.vel_x, cmd.linear[0], vbx, dt)
    u_y, loops.vel_y = pid_step(cfg.velocity, loops.vel_y, cmd.linear[1], vby, dt)
    u_alt, loops.altitude = pid_step(
        cfg.altitude, loops.altitude, altitude_set, state.position[2], dt
    )
    roll, pitch, _ = state.attitude
    # weight feedforward, scaled so the vertical thrust component is
    # unchanged by the current tilt; never demand a downward net force
    thrust = (cfg.mass * cfg.gravity + u_alt) / (math.cos(roll) * math.cos(pitch))
    return AttitudeSetpoint(
        thrust=max(thrust, 0.0),
        roll_set=_clamp(u_y, cfg.max_tilt),
        pitch_set=_clamp(-u_x, cfg.max_tilt),
        yaw_rate_set=cmd.angular[2],
        altitude_set=altitude_set,
    )


def twist_to_setpoints(
    cmd: Twist,
    state: RigidBodyState,
    cfg: BridgeConfig,
    loops: ControllerBank,
    dt: float,
) -> AttitudeSetpoint:
    """Map a velocity command onto attitude / thrust targets.

    cmd.linear.z is ignored: the drone holds cfg.altitude_set and the rest
    of the stack works in the plane. Raises NotAirborneError before the
    takeoff sequencer has confirmed the hold.
    """
    if not loops.airborne:
        raise NotAirborneError("altitude hold not engaged; run the takeoff first")
    loops.commanded = cmd
    return _outer_loops(cmd, state, cfg, loops, dt, cfg.altitude_set)


def attitude_loop(
    sp: AttitudeSetpoint,
    state: RigidBodyState,
    loops: ControllerBank,
    dt: float,
) -> WrenchCommand:
    """Inner loops: angle errors to torques, thrust passed through."""
    cfg = loops.cfg
    roll, pitch, _ = state.attitude
    t_roll, loops.roll = pid_step(cfg.attitude, loops.roll, sp.roll_set, roll, dt)
    t_pitch, loops.pitch = pid_step(cfg.attitude, loops.pitch, sp.pitch_set, pitch, dt)
    t_yaw, loops.yaw_rate = pid_step(
        cfg.yaw_rate, loops.yaw_rate, sp.yaw_rate_set, state.body_rates[2], dt
    )
    return WrenchCommand(
        thrust=sp.thrust,
        torque_roll=t_roll,
        torque_pitch=t_pitch,
        torque_yaw=t_yaw,
    )


class TakeoffPhase(enum.Enum):
    CLIMB = "CLIMB"
    HOLD = "HOLD"


def takeoff_sequencer(
    state: RigidBodyState,
    target_alt: float,
    loops: ControllerBank,
    dt: float,
) -> tuple[AttitudeSetpoint, TakeoffPhase]:
    """Climb to target_alt with zero horizontal command, then confirm HOLD.

    HOLD latches once |z - target| <= 0.05 m and |vz| <= 0.05 m/s have been
    sustained for hold_confirm seconds; the bank's airborne flag gates the
    Twist bridge on that.
    """
    if target_alt <= 0:
        raise ValueError(f"target_alt must be > 0, got {target_alt}")
    loops.commanded = Twist()
    sp = _outer_loops(Twist(), state, loops.cfg, loops, dt, target_alt)
    if not loops.airborne:
        within = (
            abs(state.position[2] - target_alt) <= 0.05
            and abs(state.velocity[2]) <= 0.05
        )
        loops.hold_time = loops.hold_time + dt if within else 0.0
        if loops.hold_time >= loops.cfg.hold_confirm:
            loops.airborne = True
    return sp, TakeoffPhase.HOLD if loops.airborne else TakeoffPhase.CLIMB


def allocate_rotors(cmd: WrenchCommand, params: VehicleParams) -> RotorSpeeds:
    """Mix with thrust priority: torques shrink so no rotor force goes negative.

    The plain mixer refuses wrenches that need a negative rotor force. Under
    transient saturation we prefer keeping the commanded thrust (altitude is
    safety-critical indoors) and scale all three torques by a common factor
    until the tightest rotor sits just above zero.
    """
    try:
        return mix(cmd, params)
    except UnallocatableError:
        thrust = max(cmd.thrust, 0.0)
        d = params.arm_length / math.sqrt(2.0)
        c = params.k_m / params.k_f
        demand = (
            abs(cmd.torque_roll) / (4.0 * d)
            + abs(cmd.torque_pitch) / (4.0 * d)
            + abs(cmd.torque_yaw) / (4.0 * c)
        )
        scale = 0.0 if demand == 0.0 else (thrust / 4.0) / demand * (1.0 - 1e-9)
        return mix(
            replace(
                cmd,
                thrust=thrust,
                torque_roll=cmd.torque_roll * scale,
                torque_pitch=cmd.torque_pitch * scale,
                torque_yaw=cmd.torque_yaw * scale,
            ),
            params,
        )
