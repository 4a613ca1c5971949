import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hovernav.geometry import (
    CycleError,
    DisconnectedError,
    MultipleParentError,
    Pose2D,
    Transform2D,
    TransformTree,
    UnknownFrameError,
    compose,
    compose_pose,
    format_tree,
    invert,
    pose_delta,
    wrap_angle,
)


def mat(t: Transform2D) -> np.ndarray:
    """Independent 3x3 homogeneous-matrix oracle."""
    c, s = math.cos(t.rot), math.sin(t.rot)
    return np.array([[c, -s, t.tx], [s, c, t.ty], [0.0, 0.0, 1.0]])


def from_mat(m: np.ndarray) -> Transform2D:
    return Transform2D(m[0, 2], m[1, 2], math.atan2(m[1, 0], m[0, 0]))


def assert_close(a: Transform2D, b: Transform2D, tol=1e-9):
    assert a.tx == pytest.approx(b.tx, abs=tol)
    assert a.ty == pytest.approx(b.ty, abs=tol)
    assert abs(wrap_angle(a.rot - b.rot)) < tol


transforms = st.builds(
    Transform2D,
    st.floats(-100, 100),
    st.floats(-100, 100),
    st.floats(-10, 10),
)


def test_compose_identity():
    t = Transform2D(1.5, -2.0, 0.7)
    assert_close(compose(Transform2D.identity(), t), t)
    assert_close(compose(t, Transform2D.identity()), t)


def test_compose_matches_matrix_oracle():
    a = Transform2D(1.0, 0.0, math.pi / 2)
    b = Transform2D(1.0, 0.0, 0.0)
    got = compose(a, b)
    expect = from_mat(mat(a) @ mat(b))
    assert_close(got, expect)
    assert got.tx == pytest.approx(1.0)
    assert got.ty == pytest.approx(1.0)
    assert got.rot == pytest.approx(math.pi / 2)


def test_invert_trivial_cases():
    assert_close(invert(Transform2D.identity()), Transform2D.identity())
    assert_close(invert(Transform2D(1, 0, 0)), Transform2D(-1, 0, 0))


def test_invert_rotated_matches_matrix_oracle():
    t = Transform2D(1.0, 0.0, math.pi / 2)
    got = invert(t)
    expect = from_mat(np.linalg.inv(mat(t)))
    assert_close(got, expect)
    assert got.tx == pytest.approx(0.0, abs=1e-12)
    assert got.ty == pytest.approx(1.0)
    assert got.rot == pytest.approx(-math.pi / 2)


@given(transforms, transforms)
def test_compose_matches_oracle_randomized(a, b):
    assert_close(compose(a, b), from_mat(mat(a) @ mat(b)), tol=1e-7)


@given(transforms, transforms, transforms)
def test_compose_associative(a, b, c):
    assert_close(compose(compose(a, b), c), compose(a, compose(b, c)), tol=1e-6)


@given(transforms)
def test_inverse_law(t):
    assert_close(compose(t, invert(t)), Transform2D.identity(), tol=1e-9)
    assert_close(compose(invert(t), t), Transform2D.identity(), tol=1e-9)


@given(st.floats(-1000, 1000))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_pose_theta_normalized():
    assert Pose2D(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)
    assert Pose2D(0, 0, -math.pi).theta == pytest.approx(math.pi)
    assert Transform2D(0, 0, -3.5 * math.pi).rot == pytest.approx(0.5 * math.pi)


def test_pose_delta_roundtrip():
    a = Pose2D(1.0, 2.0, 0.3)
    b = Pose2D(-0.5, 0.7, -2.0)
    d = pose_delta(a, b)
    back = compose_pose(a, d)
    assert back.x == pytest.approx(b.x)
    assert back.y == pytest.approx(b.y)
    assert back.theta == pytest.approx(b.theta)


# --- transform tree ---------------------------------------------------------


def chain_tree():
    t = TransformTree()
    t = t.set_transform("map", "odom", Transform2D(1.0, 0.0, 0.0), 0.0)
    t = t.set_transform("odom", "base_link", Transform2D(0.0, 2.0, math.pi / 2), 0.0)
    t = t.set_transform("base_link", "lidar_link", Transform2D(0.1, 0.0, 0.0), 0.0)
    return t


def test_set_single_edge():
    t = TransformTree().set_transform("map", "odom", Transform2D(1, 2, 0.5), 1.0)
    assert t.frames() == {"map", "odom"}
    assert t.root == "map"


def test_cycle_rejected():
    t = TransformTree().set_transform("map", "odom", Transform2D(), 0.0)
    with pytest.raises(CycleError):
        t.set_transform("odom", "map", Transform2D(), 1.0)
    with pytest.raises(CycleError):
        t.set_transform("map", "map", Transform2D(), 1.0)


def test_multiple_parent_rejected():
    t = TransformTree().set_transform("map", "odom", Transform2D(), 0.0)
    t = t.set_transform("odom", "base_link", Transform2D(), 0.0)
    with pytest.raises(MultipleParentError):
        t.set_transform("map", "base_link", Transform2D(), 1.0)


def test_update_edge_last_write_wins():
    t = TransformTree().set_transform("map", "odom", Transform2D(1, 0, 0), 0.0)
    t = t.set_transform("map", "odom", Transform2D(5, 0, 0), 1.0)
    assert t.lookup("map", "odom").tx == pytest.approx(5.0)


def test_lookup_single_hop_and_symmetry():
    edge = Transform2D(0.1, 0.0, 0.2)
    t = TransformTree().set_transform("base_link", "lidar_link", edge, 0.0)
    assert_close(t.lookup("base_link", "lidar_link"), edge)
    assert_close(t.lookup("lidar_link", "base_link"), invert(edge))


def test_lookup_chain_matches_matrix_oracle():
    t = chain_tree()
    got = t.lookup("map", "lidar_link")
    expect = from_mat(
        mat(Transform2D(1.0, 0.0, 0.0))
        @ mat(Transform2D(0.0, 2.0, math.pi / 2))
        @ mat(Transform2D(0.1, 0.0, 0.0))
    )
    assert_close(got, expect)


def test_lookup_chain_rule_through_middle_frame():
    t = chain_tree()
    whole = t.lookup("map", "lidar_link")
    split = compose(t.lookup("map", "base_link"), t.lookup("base_link", "lidar_link"))
    assert_close(whole, split)


def test_lookup_same_frame_is_identity():
    t = chain_tree()
    assert_close(t.lookup("odom", "odom"), Transform2D.identity())


def test_lookup_errors():
    t = chain_tree()
    with pytest.raises(UnknownFrameError):
        t.lookup("map", "nope")
    t2 = t.set_transform("island", "rock", Transform2D(), 0.0)
    with pytest.raises(DisconnectedError):
        t2.lookup("map", "rock")


def test_reroot_when_edge_added_above():
    t = TransformTree().set_transform("odom", "base_link", Transform2D(), 0.0)
    assert t.root == "odom"
    t = t.set_transform("map", "odom", Transform2D(), 0.0)
    assert t.root == "map"


def test_format_tree_indentation():
    text = format_tree(chain_tree())
    lines = text.splitlines()
    assert lines[0] == "map"
    assert lines[1].startswith("  odom")
    assert lines[2].startswith("    base_link")
    assert lines[3].startswith("      lidar_link")
