import math

import pytest
from hypothesis import given, strategies as st

from evtr.geometry import Pose2D, relative, rotation, wrap_angle

finite = st.floats(-100, 100, allow_nan=False)
angles = st.floats(-20, 20, allow_nan=False)
poses = st.builds(Pose2D, finite, finite, angles)


def close(a: Pose2D, b: Pose2D, tol=1e-9):
    return (abs(a.x - b.x) < tol and abs(a.y - b.y) < tol
            and abs(wrap_angle(a.theta - b.theta)) < tol)


@pytest.mark.parametrize("raw,wrapped", [
    (0.0, 0.0), (math.pi, math.pi), (-math.pi, math.pi), (3 * math.pi, math.pi),
    (2 * math.pi, 0.0), (-0.5, -0.5),
])
def test_wrap_angle(raw, wrapped):
    assert wrap_angle(raw) == pytest.approx(wrapped)


@given(angles)
def test_wrap_range(theta):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)


@given(poses)
def test_inverse_composes_to_identity(p):
    assert close(p @ p.inverse(), Pose2D())
    assert close(p.inverse() @ p, Pose2D())


@given(poses, poses, poses)
def test_composition_associative(a, b, c):
    assert close((a @ b) @ c, a @ (b @ c), tol=1e-6)


@given(poses, poses)
def test_relative_recovers_target(a, b):
    assert close(a @ relative(a, b), b, tol=1e-6)


def test_rotation_acts_about_origin():
    p = rotation(math.pi / 2) @ Pose2D(1, 0, 0)
    assert close(p, Pose2D(0, 1, math.pi / 2))


def test_theta_normalised_on_construction():
    assert Pose2D(0, 0, -math.pi).theta == math.pi


def test_helpers():
    p = Pose2D(3, 4, 1)
    assert p.norm == 5 and p.translation.tolist() == [3, 4] and p.is_finite()
    assert not Pose2D(float("inf"), 0, 0).is_finite()
