import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point, box

from hovernav.vehicle import (
    CircleObstacle,
    CrashError,
    RectObstacle,
    RigidBodyState,
    RotorSpeeds,
    UnallocatableError,
    VehicleParams,
    WorldModel,
    WrenchCommand,
    body_to_world,
    check_collision,
    mix,
    rotor_wrench,
    step_dynamics,
)

PARAMS = VehicleParams()


def allocation_oracle(cmd: WrenchCommand, params: VehicleParams) -> np.ndarray:
    """Solve the 4x4 force-allocation system numerically."""
    d = params.arm_length / math.sqrt(2.0)
    c = params.k_m / params.k_f
    a = np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [-d, d, d, -d],
            [d, d, -d, -d],
            [c, -c, c, -c],
        ]
    )
    u = np.array([cmd.thrust, cmd.torque_roll, cmd.torque_pitch, cmd.torque_yaw])
    return np.linalg.solve(a, u)


def forces(rotors: RotorSpeeds, params: VehicleParams) -> np.ndarray:
    return np.array([params.k_f * w * w for w in rotors.omega])


def hover_rotors(params: VehicleParams = PARAMS) -> RotorSpeeds:
    return mix(WrenchCommand(thrust=params.hover_thrust), params)


def test_mix_pure_thrust_symmetric():
    t = 12.0
    rotors = mix(WrenchCommand(thrust=t), PARAMS)
    expect = math.sqrt(t / (4 * PARAMS.k_f))
    for w in rotors.omega:
        assert w == pytest.approx(expect, rel=1e-12)


def test_mix_yaw_torque_matches_solver_oracle():
    cmd = WrenchCommand(thrust=14.7, torque_yaw=0.05)
    rotors = mix(cmd, PARAMS)
    f = forces(rotors, PARAMS)
    expect = allocation_oracle(cmd, PARAMS)
    np.testing.assert_allclose(f, expect, atol=1e-9)
    # FL and RR speed up, FR and RL slow down symmetrically
    base = math.sqrt(14.7 / (4 * PARAMS.k_f))
    assert rotors.omega[0] > base and rotors.omega[2] > base
    assert rotors.omega[1] < base and rotors.omega[3] < base
    assert f.sum() == pytest.approx(14.7, abs=1e-9)


@given(
    st.floats(1.0, 40.0),
    st.floats(-0.3, 0.3),
    st.floats(-0.3, 0.3),
    st.floats(-0.05, 0.05),
)
@settings(max_examples=200)
def test_mix_matches_solver_and_roundtrips(t, tr, tp, ty):
    cmd = WrenchCommand(t, tr, tp, ty)
    try:
        rotors = mix(cmd, PARAMS)
    except UnallocatableError:
        assert (allocation_oracle(cmd, PARAMS) < 0).any()
        return
    expect = allocation_oracle(cmd, PARAMS)
    assert (expect >= -1e-12).all()
    if (w == PARAMS.rotor_speed_max for w in rotors.omega) and max(rotors.omega) < PARAMS.rotor_speed_max:
        np.testing.assert_allclose(forces(rotors, PARAMS), expect, atol=1e-9)
        back = rotor_wrench(rotors, PARAMS)
        assert back.thrust == pytest.approx(cmd.thrust, abs=1e-6)
        assert back.torque_roll == pytest.approx(cmd.torque_roll, abs=1e-6)
        assert back.torque_pitch == pytest.approx(cmd.torque_pitch, abs=1e-6)
        assert back.torque_yaw == pytest.approx(cmd.torque_yaw, abs=1e-6)


def test_mix_unallocatable_zero_thrust_roll():
    with pytest.raises(UnallocatableError):
        mix(WrenchCommand(thrust=0.0, torque_roll=0.1), PARAMS)


def test_yaw_neutral_thrust():
    for ty in (-0.1, -0.02, 0.02, 0.1):
        rotors = mix(WrenchCommand(thrust=10.0, torque_yaw=ty), PARAMS)
        assert forces(rotors, PARAMS).sum() == pytest.approx(10.0, abs=1e-9)


def test_hover_equilibrium():
    state = RigidBodyState(position=(0, 0, 1.0))
    nxt = step_dynamics(state, hover_rotors(), PARAMS, 0.002)
    # thrust reproduces m*g up to sqrt/square float round-trip only
    np.testing.assert_allclose(nxt.position, state.position, atol=1e-15)
    np.testing.assert_allclose(nxt.velocity, (0, 0, 0), atol=1e-12)
    assert nxt.attitude == state.attitude
    assert nxt.time == pytest.approx(0.002)


def test_free_fall_first_step():
    state = RigidBodyState(position=(0, 0, 1.0))
    nxt = step_dynamics(state, RotorSpeeds((0, 0, 0, 0)), PARAMS, 0.002)
    assert nxt.velocity[2] == pytest.approx(-PARAMS.gravity * 0.002)


def test_tilt_acceleration_closed_form():
    # constant pitch -0.05 rad, tilt-compensated hover thrust, zero velocity:
    # horizontal acceleration is exactly g*tan(0.05), vertical is zero
    pitch = -0.05
    thrust = PARAMS.hover_thrust / math.cos(pitch)
    rotors = mix(WrenchCommand(thrust=thrust), PARAMS)
    state = RigidBodyState(position=(0, 0, 1.0), attitude=(0.0, pitch, 0.0))
    dt = 0.002
    nxt = step_dynamics(state, rotors, PARAMS, dt)
    ax = nxt.velocity[0] / dt
    az = nxt.velocity[2] / dt
    assert ax == pytest.approx(PARAMS.gravity * math.tan(0.05), abs=1e-9)
    assert az == pytest.approx(0.0, abs=1e-9)


def test_step_dynamics_deterministic():
    state = RigidBodyState(position=(0.1, -0.2, 1.0), velocity=(0.3, 0, -0.1))
    rotors = mix(WrenchCommand(thrust=15.0, torque_roll=0.01), PARAMS)
    a = step_dynamics(state, rotors, PARAMS, 0.002)
    b = step_dynamics(state, rotors, PARAMS, 0.002)
    assert a == b


def test_crash_on_attitude():
    state = RigidBodyState(position=(0, 0, 5.0), attitude=(1.55, 0, 0), body_rates=(20.0, 0, 0))
    with pytest.raises(CrashError):
        step_dynamics(state, RotorSpeeds((0, 0, 0, 0)), PARAMS, 0.002)


def test_crash_on_hard_ground_impact():
    state = RigidBodyState(position=(0, 0, 0.001), velocity=(0, 0, -2.0))
    with pytest.raises(CrashError):
        step_dynamics(state, RotorSpeeds((0, 0, 0, 0)), PARAMS, 0.002)


def test_gentle_touchdown_lands():
    state = RigidBodyState(position=(0, 0, 0.0001), velocity=(0, 0, -0.1))
    nxt = step_dynamics(state, RotorSpeeds((0, 0, 0, 0)), PARAMS, 0.002)
    assert nxt.position[2] == 0.0
    assert nxt.velocity == (0.0, 0.0, 0.0)


def test_energy_non_increasing_without_drag():
    params = VehicleParams(linear_drag=1e-12)
    state = RigidBodyState(
        position=(0, 0, 700.0), velocity=(1.0, -0.5, 0.0), body_rates=(0.1, 0.05, -0.2)
    )
    zero = RotorSpeeds((0, 0, 0, 0))

    def energy(s):
        ke = 0.5 * params.mass * sum(v * v for v in s.velocity)
        rot = 0.5 * sum(i * w * w for i, w in zip(params.inertia_diag, s.body_rates))
        return ke + rot + params.mass * params.gravity * s.position[2]

    prev = energy(state)
    for _ in range(5000):  # 10 s at dt=0.002
        try:
            state = step_dynamics(state, zero, params, 0.002)
        except CrashError:
            pytest.fail("tumbling free fall should stay within attitude envelope")
        cur = energy(state)
        assert cur <= prev + 1e-9
        prev = cur


def test_rotation_matrix_is_orthonormal():
    r = np.array(body_to_world((0.3, -0.2, 1.1)))
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0)


# --- collision ---------------------------------------------------------------


def sample_world() -> WorldModel:
    return WorldModel(
        -5,
        -5,
        5,
        5,
        obstacles=(
            RectObstacle("crate", -1.0, -1.0, 0.5, 0.8),
            CircleObstacle("pillar", 2.5, 2.5, 0.4),
        ),
    )


def test_no_collision_at_center_of_empty_room():
    world = WorldModel(-2, -2, 2, 2)
    report = check_collision(RigidBodyState(), world, PARAMS)
    assert not report.contact


def test_wall_tangency_is_contact():
    # radius and coordinates exact in binary so the tangency is exact too
    params = VehicleParams(body_radius=0.25)
    world = WorldModel(-2, -2, 2, 2)
    state = RigidBodyState(position=(1.75, 0.0, 1.0))
    report = check_collision(state, world, params)
    assert report.contact and report.shape_id == "bounds"
    # slightly further from the wall: contact-free
    assert not check_collision(
        RigidBodyState(position=(1.7499999, 0.0, 1.0)), world, params
    ).contact


def test_collision_against_brute_force_oracle():
    world = sample_world()
    r = PARAMS.body_radius
    crate = box(-1.0, -1.0, 0.5, 0.8)
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(1000):
        x = rng.uniform(world.xmin, world.xmax)
        y = rng.uniform(world.ymin, world.ymax)
        p = Point(x, y)
        d_wall = min(x - world.xmin, world.xmax - x, y - world.ymin, world.ymax - y)
        d_circle = math.hypot(x - 2.5, y - 2.5) - 0.4
        dists = [d_wall, p.distance(crate), d_circle]
        if min(abs(d - r) for d in dists) < 1e-6:
            continue  # skip knife-edge tangencies, convention-dependent
        expect = min(dists) <= r
        got = check_collision(RigidBodyState(position=(x, y, 1.0)), world, PARAMS)
        assert got.contact == expect, f"mismatch at ({x:.4f},{y:.4f})"
        checked += 1
    assert checked > 950


def test_world_validation():
    bad = WorldModel(-1, -1, 1, 1, obstacles=(RectObstacle("big", -2, -2, 2, 2),))
    assert any("big" in p for p in bad.validate())
    assert VehicleParams(mass=-1).validate()
    assert not PARAMS.validate()
