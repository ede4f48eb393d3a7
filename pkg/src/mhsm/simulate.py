"""Raytraced lidar scans of polygonal rooms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, Transform2
from .scan import PolarScan, beam_angles

PARALLEL_TOL = 1e-12


@dataclass(frozen=True)
class Environment:
    """Static world made of wall segments, shape ``(m, 2, 2)``."""

    segments: np.ndarray

    def __post_init__(self):
        seg = np.asarray(self.segments, dtype=float).reshape(-1, 2, 2)
        if len(seg) == 0:
            raise ValueError("environment has no segments")
        if np.any(np.all(np.isclose(seg[:, 0], seg[:, 1], rtol=0, atol=0), axis=1)):
            raise ValueError("degenerate wall segment")
        object.__setattr__(self, "segments", seg)

    @classmethod
    def rectangle(cls, width: float = 6.0, height: float = 4.0) -> "Environment":
        """Axis-aligned room centred on the origin."""
        w, h = width / 2, height / 2
        corners = np.array([[-w, -h], [w, -h], [w, h], [-w, h]])
        return cls(np.stack([corners, np.roll(corners, -1, axis=0)], axis=1))


@dataclass(frozen=True)
class SensorModel:
    n_beams: int = 360
    fov: float = 2 * math.pi
    max_range: float = 8.0
    noise_std: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_beams < 2:
            raise ValueError("need at least two beams")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    @property
    def angles(self) -> np.ndarray:
        return beam_angles(self.n_beams, self.fov)


def raytrace_scan(env: Environment, pose: Pose2, sensor: SensorModel,
                  rng: np.random.Generator | None = None) -> PolarScan:
    """Simulate one sweep from ``pose``.

    Beams that hit nothing read ``max_range``. Noise is drawn from ``rng``
    when given, otherwise from a generator seeded with ``sensor.rng_seed``.
    """
    alpha = sensor.angles
    world = alpha + pose.theta
    dirs = np.column_stack([np.cos(world), np.sin(world)])  # (n, 2)
    a = env.segments[:, 0]  # (m, 2)
    e = env.segments[:, 1] - a
    w = a - pose.position  # origin -> segment start

    def cross(u, v):
        return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]

    # Solve origin + t*dir = a + s*e for every beam/segment pair.
    den = cross(dirs[:, None, :], e[None, :, :])  # (n, m)
    ok = np.abs(den) > PARALLEL_TOL
    safe = np.where(ok, den, 1.0)
    t = cross(w[None, :, :], e[None, :, :]) / safe
    s = cross(w[None, :, :], dirs[:, None, :]) / safe
    hit = ok & (t > PARALLEL_TOL) & (s >= -PARALLEL_TOL) & (s <= 1 + PARALLEL_TOL)
    t = np.where(hit, t, np.inf)
    d = np.minimum(t.min(axis=1), sensor.max_range)

    if sensor.noise_std > 0:
        if rng is None:
            rng = np.random.default_rng(sensor.rng_seed)
        noisy = d + rng.normal(0.0, sensor.noise_std, size=d.shape)
        # Max-range returns stay max-range: there is no surface to perturb.
        d = np.where(d >= sensor.max_range, d, np.clip(noisy, 0.0, sensor.max_range))
    return PolarScan(d, alpha, sensor.max_range)


def table2_trajectory() -> list[Transform2]:
    """The six relative steps of the synthetic room benchmark."""
    return [
        Transform2.from_degrees(0.0, 0.0, 0.0),
        Transform2.from_degrees(0.0, -0.5, 0.0),
        Transform2.from_degrees(0.0, 0.0, 45.0),
        Transform2.from_degrees(-0.35, 0.0, 0.0),
        Transform2.from_degrees(0.0, 0.0, 45.0),
        Transform2.from_degrees(-0.5, -0.25, 0.0),
    ]


def trajectory_poses(steps: list[Transform2], start: Pose2 = Pose2()) -> list[Pose2]:
    """Absolute poses visited by chaining ``steps`` from ``start`` (inclusive)."""
    poses = [start]
    for step in steps:
        poses.append(poses[-1].moved(step))
    return poses


@dataclass
class ScanSequence:
    poses: list[Pose2]
    scans: list[PolarScan] = field(default_factory=list)


def simulate_sequence(steps: list[Transform2], env: Environment | None = None,
                      sensor: SensorModel | None = None,
                      start: Pose2 = Pose2()) -> ScanSequence:
    """Scan at the start pose and after every step; one noise stream for all."""
    env = env or Environment.rectangle()
    sensor = sensor or SensorModel()
    rng = np.random.default_rng(sensor.rng_seed)
    poses = trajectory_poses(steps, start)
    return ScanSequence(poses, [raytrace_scan(env, p, sensor, rng) for p in poses])
