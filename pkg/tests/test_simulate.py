import math

import numpy as np
import pytest

from mhsm.geometry import Pose2, Transform2
from mhsm.simulate import (Environment, SensorModel, raytrace_scan, simulate_sequence, table2_trajectory,
                           trajectory_poses)


def _range_at(scan, alpha):
    i = int(np.argmin(np.abs(scan.angles - alpha)))
    assert scan.angles[i] == pytest.approx(alpha)
    return scan.ranges[i]


def test_centre_of_room_closed_forms():
    scan = raytrace_scan(Environment.rectangle(), Pose2(), SensorModel(noise_std=0.0))
    assert _range_at(scan, 0.0) == pytest.approx(3.0, abs=1e-9)
    assert _range_at(scan, math.pi / 2) == pytest.approx(2.0, abs=1e-9)
    assert _range_at(scan, math.pi / 4) == pytest.approx(2 * math.sqrt(2), abs=1e-9)


def test_noise_free_ranges_match_box_geometry():
    pose = Pose2(0.4, -0.3, 0.2)
    scan = raytrace_scan(Environment.rectangle(), pose, SensorModel(noise_std=0.0))
    world = scan.angles + pose.theta
    c, s = np.cos(world), np.sin(world)
    with np.errstate(divide="ignore"):
        tx = np.where(c > 0, (3 - pose.x) / c, np.where(c < 0, (-3 - pose.x) / c, np.inf))
        ty = np.where(s > 0, (2 - pose.y) / s, np.where(s < 0, (-2 - pose.y) / s, np.inf))
    np.testing.assert_allclose(scan.ranges, np.minimum(np.minimum(tx, ty), 8.0), atol=1e-9)


def test_no_hit_returns_max_range():
    env = Environment(np.array([[[10.0, -1.0], [10.0, 1.0]]]))
    scan = raytrace_scan(env, Pose2(), SensorModel(noise_std=0.0, max_range=8.0))
    assert np.all(scan.ranges == 8.0)


def test_noisy_scans_reproducible_and_in_range():
    sensor = SensorModel(noise_std=0.5, rng_seed=3)
    a = raytrace_scan(Environment.rectangle(), Pose2(), sensor)
    b = raytrace_scan(Environment.rectangle(), Pose2(), sensor)
    np.testing.assert_array_equal(a.ranges, b.ranges)
    assert a.ranges.min() >= 0 and a.ranges.max() <= sensor.max_range


def test_degenerate_segment_rejected():
    with pytest.raises(ValueError):
        Environment(np.array([[[1.0, 1.0], [1.0, 1.0]]]))


def test_benchmark_trajectory_rows():
    steps = table2_trajectory()
    assert len(steps) == 6
    assert steps[1].as_tuple() == pytest.approx((0.0, -0.5, 0.0))
    assert steps[2].as_tuple() == pytest.approx((0.0, 0.0, math.pi / 4))
    assert steps[5].as_tuple() == pytest.approx((-0.5, -0.25, 0.0))


def test_sequence_relative_poses_equal_steps():
    steps = table2_trajectory()
    poses = trajectory_poses(steps)
    for k, step in enumerate(steps):
        np.testing.assert_allclose(poses[k + 1].relative_to(poses[k]).as_tuple(), step.as_tuple(), atol=1e-12)
    seq = simulate_sequence(steps, sensor=SensorModel(noise_std=0.0))
    assert len(seq.scans) == 7


def test_moved_sensor_sees_shifted_wall():
    seq = simulate_sequence([Transform2(0.0, -0.5, 0.0)], sensor=SensorModel(noise_std=0.0))
    assert _range_at(seq.scans[1], -math.pi / 2) == pytest.approx(1.5, abs=1e-9)
    assert _range_at(seq.scans[1], math.pi / 2) == pytest.approx(2.5, abs=1e-9)
