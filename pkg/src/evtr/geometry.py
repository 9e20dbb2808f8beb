"""Planar rigid-body poses (SE(2)) used by the map, controller and simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(theta: float) -> float:
    """Normalize an angle to the half-open interval (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    """Pose in the plane: position in meters, heading in radians.

    ``theta`` is normalized to (-pi, pi] on construction. Composition follows
    the usual homogeneous-matrix convention, ``a @ b`` is "b expressed in a".
    """

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def __matmul__(self, other: "Pose2D") -> "Pose2D":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "Pose2D":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in self.as_tuple())


def rotation(angle: float) -> Pose2D:
    """Pure rotation about the origin."""
    return Pose2D(0.0, 0.0, angle)


def relative(a: Pose2D, b: Pose2D) -> Pose2D:
    """Transform taking frame ``a`` to frame ``b``, i.e. ``a^-1 @ b``."""
    return a.inverse() @ b
