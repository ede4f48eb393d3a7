"""Planar rigid-body helpers.

Points are plain length-2 numpy arrays (or anything ``np.asarray`` accepts);
stacks of points are ``(n, 2)`` arrays. All angles are radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap an angle (scalar or array) to the half-open interval (-pi, pi].

    Values already inside the interval are returned bit-for-bit.
    """
    a = np.asarray(a, dtype=float)
    inside = (a > -np.pi) & (a <= np.pi)
    w = np.where(inside, a, np.pi - np.mod(np.pi - a, TWO_PI))
    if np.ndim(w) == 0:
        return float(w)
    return w


def angle_diff(a, b):
    """Return ``a - b`` wrapped to (-pi, pi]."""
    return wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotate(p, angle: float) -> np.ndarray:
    """Rotate a point, or an ``(n, 2)`` stack of points, about the origin."""
    p = np.asarray(p, dtype=float)
    return p @ rotation_matrix(angle).T


@dataclass(frozen=True)
class Transform2:
    """Rigid planar transform ``p -> R(rotation) p + (tx, ty)``."""

    tx: float = 0.0
    ty: float = 0.0
    rotation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tx", float(self.tx))
        object.__setattr__(self, "ty", float(self.ty))
        object.__setattr__(self, "rotation", wrap_angle(self.rotation))

    @classmethod
    def identity(cls) -> "Transform2":
        return cls()

    @classmethod
    def from_degrees(cls, tx: float, ty: float, degrees: float) -> "Transform2":
        return cls(tx, ty, math.radians(degrees))

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    @property
    def degrees(self) -> float:
        return math.degrees(self.rotation)

    def apply(self, p) -> np.ndarray:
        return rotate(p, self.rotation) + self.translation

    def inverse(self) -> "Transform2":
        t = -rotate(self.translation, -self.rotation)
        return Transform2(t[0], t[1], -self.rotation)

    def compose(self, other: "Transform2") -> "Transform2":
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        t = self.apply(other.translation)
        return Transform2(t[0], t[1], self.rotation + other.rotation)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.tx, self.ty, self.rotation)


@dataclass(frozen=True)
class Pose2:
    """Robot or sensor pose in a world frame."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def moved(self, step: Transform2) -> "Pose2":
        """Pose reached by applying ``step`` expressed in this pose's frame."""
        p = self.position + rotate(step.translation, self.theta)
        return Pose2(p[0], p[1], self.theta + step.rotation)

    def relative_to(self, origin: "Pose2") -> Transform2:
        """This pose expressed in the frame of ``origin``."""
        t = rotate(self.position - origin.position, -origin.theta)
        return Transform2(t[0], t[1], angle_diff(self.theta, origin.theta))


def apply_transform(t: Transform2, p) -> np.ndarray:
    return t.apply(p)


def inverse(t: Transform2) -> Transform2:
    return t.inverse()


def rigid_fit(src: np.ndarray, dst: np.ndarray) -> Transform2:
    """Least-squares rigid transform mapping ``src`` onto ``dst``.

    Closed form for the plane: the rotation is the angle of the centred
    cross-covariance, so no SVD is needed and reflections cannot occur.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    a = src - cs
    b = dst - cd
    sxx = np.dot(a[:, 0], b[:, 0]) + np.dot(a[:, 1], b[:, 1])
    sxy = np.dot(a[:, 0], b[:, 1]) - np.dot(a[:, 1], b[:, 0])
    theta = math.atan2(sxy, sxx)
    t = cd - rotate(cs, theta)
    return Transform2(t[0], t[1], theta)
