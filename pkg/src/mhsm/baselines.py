"""Point-based iterative matchers used as baselines: ICP and IDC.

IDC (iterative dual correspondence) runs two correspondence rules side by
side. Closest points (the ICP rule) fix the translation; for the rotation,
each point is paired with the reference point of most similar range inside
an angular window around its bearing (the IMRP rule), which is much less
sensitive to rotation than closest-point pairing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Transform2, rigid_fit
from .scan import CartesianScan


@dataclass(frozen=True)
class IterativeParams:
    max_iterations: int = 50
    correspondence_cutoff: float = 1.0
    convergence_eps_t: float = 1e-4
    convergence_eps_r: float = 1e-4
    angular_window: float = math.radians(20.0)
    window_decay: float = 1.0  # per-iteration shrink factor of the IMRP window


@dataclass
class IterativeResult:
    transform: Transform2
    iterations: int = 0
    converged: bool = False
    degraded: bool = False
    residuals: list[float] = field(default_factory=list)


def closest_point_pairs(moved: np.ndarray, reference: CartesianScan, cutoff: float):
    """Indices ``(i, j)`` pairing moved point ``i`` with its nearest reference ``j``."""
    d, j = reference.nearest_indices(moved)
    keep = d < cutoff
    return np.flatnonzero(keep), j[keep], d


class _PolarIndex:
    """Reference points sorted by bearing, unwrapped over three turns."""

    def __init__(self, reference: CartesianScan):
        pts = reference.points
        bearing = np.arctan2(pts[:, 1], pts[:, 0])
        order = np.argsort(bearing, kind="stable")
        self.n = len(order)
        self.bearing = np.concatenate([bearing[order] - 2 * math.pi, bearing[order],
                                       bearing[order] + 2 * math.pi])
        self.rng = np.tile(np.hypot(pts[order, 0], pts[order, 1]), 3)
        self.index = np.tile(order, 3)
        self.points = np.tile(pts[order], (3, 1))

    def most_similar_range(self, moved: np.ndarray, window: float):
        """Matching-range points for every moved point.

        The reference range is interpolated linearly in bearing between
        neighbouring beams; among bearings inside ``window`` whose
        interpolated range equals the point's own, the one nearest its
        bearing wins. When no segment crosses that range, the reference
        point of closest range in the window is used instead.

        Returns ``(i, targets)``: moved-point indices and ``(k, 2)`` matched
        positions.
        """
        empty = np.empty(0, dtype=int), np.empty((0, 2))
        if window <= 0 or self.n == 0 or len(moved) == 0:
            return empty
        r = np.hypot(moved[:, 0], moved[:, 1])
        phi = np.arctan2(moved[:, 1], moved[:, 0])
        window = min(window, math.pi)
        lo = np.searchsorted(self.bearing, phi - window, side="left")
        hi = np.searchsorted(self.bearing, phi + window, side="right")
        width = int((hi - lo).max(initial=0))
        if width == 0:
            return empty
        last = len(self.bearing) - 1
        cols = np.minimum(lo[:, None] + np.arange(width)[None], last)
        valid = (lo[:, None] + np.arange(width)[None]) < hi[:, None]
        rows = np.arange(len(r))

        # Interpolated solutions on segments (cols, cols + 1).
        nxt = np.minimum(cols + 1, last)
        ra, rb = self.rng[cols], self.rng[nxt]
        pa, pb = self.bearing[cols], self.bearing[nxt]
        dr = rb - ra
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (r[:, None] - ra) / dr
        seg_ok = valid & (cols < last) & (np.abs(dr) > 0) & (t >= 0) & (t <= 1)
        phi_star = pa + np.where(seg_ok, t, 0.0) * (pb - pa)
        off = np.where(seg_ok, np.abs(phi_star - phi[:, None]), np.inf)
        off = np.where(off <= window, off, np.inf)
        k = np.argmin(off, axis=1)
        interp = np.isfinite(off[rows, k])
        ang = phi_star[rows, k]
        targets = np.column_stack([r * np.cos(ang), r * np.sin(ang)])

        # Fallback: closest range among the window's points.
        gap = np.where(valid, np.abs(self.rng[cols] - r[:, None]), np.inf)
        best = np.argmin(gap, axis=1)
        has = np.isfinite(gap[rows, best])
        fb = ~interp & has
        if fb.any():
            targets[fb] = self.points[cols[fb, best[fb]]]
        i = np.flatnonzero(interp | has)
        return i, targets[i]


def imrp_correspondence(current: CartesianScan, reference: CartesianScan,
                        estimate: Transform2, angular_window: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """Matching-range-point pairs ``(current point, matched reference position)``.

    Current points are first moved by ``estimate``; points with no reference
    bearing inside the window are skipped.
    """
    moved = estimate.apply(current.points)
    i, targets = _PolarIndex(reference).most_similar_range(moved, angular_window)
    return [(current.points[a], tgt) for a, tgt in zip(i, targets)]


def _asr(moved, reference):
    d, _ = reference.nearest_indices(moved)
    return float(np.mean(d * d))


def _iterate(current: CartesianScan, reference: CartesianScan, init: Transform2,
             params: IterativeParams, dual: bool) -> IterativeResult:
    if len(current) == 0 or len(reference) == 0:
        raise ValueError("both scans must be non-empty")
    est = init
    src = current.points
    polar = _PolarIndex(reference) if dual else None
    result = IterativeResult(est)
    for it in range(params.max_iterations):
        moved = est.apply(src)
        i, j, d = closest_point_pairs(moved, reference, params.correspondence_cutoff)
        result.residuals.append(float(np.mean(d * d)))
        if len(i) < 2:
            result.degraded = True
            break
        step = rigid_fit(moved[i], reference.points[j])
        if dual:
            window = params.angular_window * params.window_decay**it
            a, targets = polar.most_similar_range(moved, window)
            if len(a) >= 2:
                rot = rigid_fit(moved[a], targets).rotation
                # Translation from closest points, re-solved for the IMRP rotation.
                ci = moved[i].mean(axis=0)
                cj = reference.points[j].mean(axis=0)
                t = cj - Transform2(0, 0, rot).apply(ci)
                step = Transform2(t[0], t[1], rot)
        est = step.compose(est)
        result.iterations = it + 1
        if (math.hypot(step.tx, step.ty) < params.convergence_eps_t
                and abs(step.rotation) < params.convergence_eps_r):
            result.converged = True
            break
    result.transform = est
    if not result.degraded:
        result.residuals.append(_asr(est.apply(src), reference))
    return result


def icp_match(current: CartesianScan, reference: CartesianScan,
              init: Transform2 = Transform2(), params: IterativeParams = IterativeParams()) -> IterativeResult:
    """Point-to-point ICP. ``degraded`` is set when the cutoff leaves fewer than two pairs."""
    return _iterate(current, reference, init, params, dual=False)


def idc_match(current: CartesianScan, reference: CartesianScan,
              init: Transform2 = Transform2(), params: IterativeParams = IterativeParams()) -> IterativeResult:
    """Iterative dual correspondence: ICP translation, IMRP rotation."""
    return _iterate(current, reference, init, params, dual=True)
