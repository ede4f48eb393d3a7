import math

import numpy as np
import pytest

from mhsm.baselines import IterativeParams, icp_match, idc_match, imrp_correspondence
from mhsm.geometry import Transform2, rotate
from mhsm.scan import CartesianScan

from conftest import room_pair


def test_icp_self_match():
    cur, _, _ = room_pair(Transform2(), noise=0.01)
    r = icp_match(cur, cur)
    assert r.converged
    np.testing.assert_allclose(r.transform.as_tuple(), (0, 0, 0), atol=1e-6)


def test_icp_small_translation():
    cur, ref, truth = room_pair(Transform2(0.1, 0.0, 0.0))
    est = icp_match(cur, ref).transform
    assert math.hypot(est.tx - 0.1, est.ty) < 0.01
    assert abs(est.rotation) < math.radians(0.5)


def test_icp_degraded_without_pairs():
    cur = CartesianScan([[0.0, 0.0], [1.0, 0.0]])
    ref = CartesianScan([[10.0, 10.0], [11.0, 10.0]])
    init = Transform2(0.1, 0.0, 0.0)
    r = icp_match(cur, ref, init)
    assert r.degraded
    assert r.transform == init


def test_icp_residual_non_increasing():
    for step in (Transform2(0.1, -0.05, 0.05), Transform2(0.0, -0.3, 0.0), Transform2(0.2, 0.1, 0.1)):
        cur, ref, _ = room_pair(step)
        res = icp_match(cur, ref).residuals
        assert all(b <= a + 1e-9 for a, b in zip(res, res[1:]))


def test_imrp_identical_scans_pair_with_themselves():
    cur, _, _ = room_pair(Transform2(), noise=0.01)
    pairs = imrp_correspondence(cur, cur, Transform2(), math.radians(20))
    assert len(pairs) == len(cur)
    for a, b in pairs:
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_imrp_one_beam_rotation_finds_twin():
    n = 180
    bearing = -math.pi + np.arange(n) * (2 * math.pi / n)
    rng = 1.0 + np.arange(n) / n  # strictly increasing: every range is unique
    ref_pts = np.column_stack([rng * np.cos(bearing), rng * np.sin(bearing)])
    cur_pts = rotate(ref_pts, 2 * math.pi / n)
    pairs = imrp_correspondence(CartesianScan(cur_pts), CartesianScan(ref_pts), Transform2(), math.radians(10))
    matched = {i: tgt for i, (src, tgt) in enumerate(pairs)}
    assert len(pairs) == n
    # Away from the seam where the spiral jumps back, each point meets its twin.
    for i in range(10, n - 10):
        np.testing.assert_allclose(matched[i], ref_pts[i], atol=1e-9)


def test_imrp_zero_window_skips_everything():
    cur, _, _ = room_pair(Transform2())
    assert imrp_correspondence(cur, cur, Transform2(), 0.0) == []


def test_idc_self_match():
    cur, _, _ = room_pair(Transform2(), noise=0.01)
    np.testing.assert_allclose(idc_match(cur, cur).transform.as_tuple(), (0, 0, 0), atol=1e-6)


def test_idc_translation_fixture():
    cur, ref, _ = room_pair(Transform2(0.0, -0.5, 0.0))
    est = idc_match(cur, ref).transform
    assert math.hypot(est.tx, est.ty + 0.5) < 0.05


def test_idc_equals_icp_when_window_vanishes():
    cur, ref, _ = room_pair(Transform2(0.1, -0.1, 0.1), noise=0.01)
    p = IterativeParams(angular_window=0.0)
    a, b = icp_match(cur, ref, params=p), idc_match(cur, ref, params=p)
    assert a.transform == b.transform
    assert a.iterations == b.iterations


def test_idc_beats_icp_on_rotation():
    cur, ref, _ = room_pair(Transform2.from_degrees(0.0, 0.0, 30.0))
    icp = icp_match(cur, ref).transform
    idc = idc_match(cur, ref).transform
    assert abs(idc.degrees - 30.0) < abs(icp.degrees - 30.0)


def test_matchers_deterministic():
    cur, ref, _ = room_pair(Transform2(0.05, 0.1, 0.2), noise=0.01)
    for fn in (icp_match, idc_match):
        assert fn(cur, ref).transform == fn(cur, ref).transform


def test_empty_scan_rejected():
    empty = CartesianScan(np.empty((0, 2)))
    with pytest.raises(ValueError):
        icp_match(empty, CartesianScan([[0.0, 0.0]]))
