"""Range scans and the spatial queries run against them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class PolarScan:
    """One lidar sweep: ranges ``d`` at beam angles ``alpha`` (sensor frame)."""

    ranges: np.ndarray
    angles: np.ndarray
    max_range: float

    def __post_init__(self):
        ranges = np.asarray(self.ranges, dtype=float).ravel()
        angles = np.asarray(self.angles, dtype=float).ravel()
        if ranges.shape != angles.shape:
            raise ValueError(f"{ranges.size} ranges but {angles.size} angles")
        if ranges.size and (ranges.min() < 0 or ranges.max() > self.max_range):
            raise ValueError("ranges must lie in [0, max_range]")
        if angles.size > 1 and np.any(np.diff(angles) <= 0):
            raise ValueError("beam angles must be strictly increasing")
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "max_range", float(self.max_range))

    def __len__(self) -> int:
        return self.ranges.size

    def to_cartesian(self, drop_max_range: bool = True) -> "CartesianScan":
        return polar_to_cartesian(self, drop_max_range)


def beam_angles(n: int, fov: float, start: float | None = None) -> np.ndarray:
    """Evenly spaced beam angles.

    A full circle excludes the duplicate endpoint and starts at -pi; a
    partial field of view is symmetric about the heading and includes both
    ends.
    """
    if fov >= 2 * math.pi - 1e-12:
        first = -math.pi if start is None else start
        return first + np.arange(n) * (2 * math.pi / n)
    first = -fov / 2 if start is None else start
    return np.linspace(first, first + fov, n)


def polar_to_cartesian(scan: PolarScan, drop_max_range: bool = True) -> "CartesianScan":
    d, a = scan.ranges, scan.angles
    if drop_max_range:
        keep = d < scan.max_range
        d, a = d[keep], a[keep]
    pts = np.column_stack([d * np.cos(a), d * np.sin(a)])
    return CartesianScan(pts)


class CartesianScan:
    """Immutable planar point set with a k-d tree built at construction.

    Distance ties in nearest-neighbour queries resolve to the lower point
    index, independently of how the tree happens to order them.
    """

    def __init__(self, points):
        pts = np.array(points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("scan points must be finite")
        pts.setflags(write=False)
        self._points = pts
        self._tree = cKDTree(pts) if len(pts) else None

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def tree(self) -> cKDTree | None:
        return self._tree

    def __len__(self) -> int:
        return len(self._points)

    def neighbor_indices(self, p, d_min: float, d_max: float) -> np.ndarray:
        """Indices of points ``q`` with ``d_min < |q - p| < d_max``, ascending."""
        if self._tree is None:
            return np.empty(0, dtype=int)
        p = np.asarray(p, dtype=float)
        idx = np.asarray(self._tree.query_ball_point(p, d_max, return_sorted=True), dtype=int)
        if idx.size == 0:
            return idx
        dist = _norms(self._points[idx] - p)
        return idx[(dist > d_min) & (dist < d_max)]

    def neighbor_table(self, d_min: float, d_max: float) -> tuple[np.ndarray, np.ndarray]:
        """All neighbour sets at once in CSR form ``(indptr, indices)``.

        ``indices[indptr[i]:indptr[i + 1]]`` equals ``neighbor_indices(points[i], ...)``.
        """
        n = len(self._points)
        if n == 0:
            return np.zeros(1, dtype=int), np.empty(0, dtype=int)
        pairs = self._tree.query_pairs(d_max, output_type="ndarray")
        if len(pairs):
            diff = self._points[pairs[:, 0]] - self._points[pairs[:, 1]]
            dist = _norms(diff)
            pairs = pairs[(dist > d_min) & (dist < d_max)]
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        order = np.lexsort((cols, rows))
        indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n))])
        return indptr, cols[order]

    def neighbor_set(self, p, d_min: float, d_max: float) -> np.ndarray:
        return self._points[self.neighbor_indices(p, d_min, d_max)]

    def k_nearest_indices(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Batched k-NN: ``(dist, idx)`` of shape ``(m, min(k, n))``.

        Rows are sorted by distance, then index.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(queries, dtype=float).reshape(-1, 2)
        n = len(self._points)
        if n == 0:
            return np.empty((len(q), 0)), np.empty((len(q), 0), dtype=int)
        kk = min(k, n)
        extra = 1 if kk < n else 0
        dist, idx = self._tree.query(q, k=kk + extra)
        dist = np.asarray(dist).reshape(len(q), kk + extra)
        idx = np.asarray(idx).reshape(len(q), kk + extra)
        # Rows whose last kept distance ties any neighbour need the exact rule.
        if extra:
            tied = dist[:, kk - 1] == dist[:, kk]
        else:
            tied = np.zeros(len(q), dtype=bool)
        if kk > 1:
            tied |= np.any(dist[:, 1:kk] == dist[:, : kk - 1], axis=1)
        dist, idx = dist[:, :kk].copy(), idx[:, :kk].copy()
        for r in np.flatnonzero(tied):
            cand = np.asarray(self._tree.query_ball_point(q[r], dist[r, -1] * (1 + 1e-12) + 1e-300), dtype=int)
            cd = _norms(self._points[cand] - q[r])
            order = np.lexsort((cand, cd))[:kk]
            dist[r], idx[r] = cd[order], cand[order]
        return dist, idx

    def k_nearest(self, p, k: int) -> np.ndarray:
        _, idx = self.k_nearest_indices(p, k)
        return self._points[idx[0]]

    def nearest_indices(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Batched 1-NN returning ``(dist, idx)`` as flat arrays."""
        if len(self._points) == 0:
            raise ValueError("nearest query on an empty scan")
        dist, idx = self.k_nearest_indices(queries, 1)
        return dist[:, 0], idx[:, 0]

    def nearest(self, p) -> np.ndarray:
        _, idx = self.nearest_indices(p)
        return self._points[idx[0]]


def _norms(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", v, v))


def brute_force_k_nearest(points: np.ndarray, p, k: int) -> np.ndarray:
    """Reference k-NN by full sort; used to cross-check the tree."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    d = _norms(points - np.asarray(p, dtype=float))
    order = np.lexsort((np.arange(len(points)), d))
    return order[:k]
