"""Monte-Carlo roto-translation hypotheses from point-pair correspondences.

A pair of neighbouring points ``(p, q)`` in the current scan is matched
against each of the ``K`` nearest reference points ``p'`` of ``p``. The
reference point closest to ``p' + (q - p)`` becomes ``q'``; the change of
heading between ``pq`` and ``p'q'`` gives the rotation, and the offset between
``q'`` and the rotated ``q`` gives the translation. Each hypothesis carries a
unit contribution vector normal to ``p'q'``: a match along a wall says
nothing about motion parallel to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import angle_diff, wrap_angle
from .scan import CartesianScan

DEGENERATE_EPS = 1e-12


class HypothesisGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenParams:
    n_hypotheses: int = 500
    d_min: float = 0.05
    d_max: float = 0.5
    k: int = 4
    rng_seed: int = 0
    max_failures_factor: int = 50

    def __post_init__(self):
        if self.n_hypotheses < 1 or self.k < 1:
            raise ValueError("n_hypotheses and k must be >= 1")
        if not 0 < self.d_min < self.d_max:
            raise ValueError("need 0 < d_min < d_max")


@dataclass(frozen=True)
class Hypothesis:
    delta_t: np.ndarray
    delta_theta: float
    psi: np.ndarray


def canonical_psi(psi: np.ndarray) -> np.ndarray:
    """Pick the sign of each axis vector so that ``psi_x > 0`` (or ``psi_y >= 0`` on ties)."""
    psi = np.asarray(psi, dtype=float)
    flip = (psi[..., 0] < 0) | ((psi[..., 0] == 0) & (psi[..., 1] < 0))
    return np.where(flip[..., None], -psi, psi)


def contribution_vector(heading) -> np.ndarray:
    """Unit normal to a segment with the given heading, canonical sign."""
    h = np.asarray(heading, dtype=float) + math.pi / 2
    return canonical_psi(np.stack([np.cos(h), np.sin(h)], axis=-1))


class HypothesisSet:
    """Column store of hypotheses: ``delta_t (n, 2)``, ``delta_theta (n,)``, ``psi (n, 2)``.

    ``sources`` optionally holds the ``(p, q, p', q')`` point indices each
    hypothesis came from (current, current, reference, reference).
    """

    def __init__(self, delta_t, delta_theta, psi, sources=None):
        self.delta_t = np.asarray(delta_t, dtype=float).reshape(-1, 2)
        self.delta_theta = wrap_angle(np.asarray(delta_theta, dtype=float).reshape(-1))
        self.psi = np.asarray(psi, dtype=float).reshape(-1, 2)
        self.sources = None if sources is None else np.asarray(sources, dtype=int).reshape(-1, 4)
        n = len(self.delta_t)
        if len(self.delta_theta) != n or len(self.psi) != n:
            raise ValueError("hypothesis columns have different lengths")

    @classmethod
    def from_list(cls, hyps: list[Hypothesis]) -> "HypothesisSet":
        if not hyps:
            return cls(np.empty((0, 2)), np.empty(0), np.empty((0, 2)))
        return cls([h.delta_t for h in hyps], [h.delta_theta for h in hyps], [h.psi for h in hyps])

    def __len__(self) -> int:
        return len(self.delta_t)

    def __getitem__(self, i: int) -> Hypothesis:
        return Hypothesis(self.delta_t[i].copy(), float(self.delta_theta[i]), self.psi[i].copy())

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def projected(self) -> np.ndarray:
        """Translations projected onto their contribution axis, ``(psi . dT) psi``."""
        s = np.einsum("ij,ij->i", self.delta_t, self.psi)
        return s[:, None] * self.psi


def _pair_hypotheses(p, q, p_prime, reference: CartesianScan):
    """Vectorised core of :func:`pair_hypothesis`.

    All inputs are ``(m, 2)``. Returns ``(delta_t, delta_theta, psi, q_idx, ok)``.
    """
    q_hat = p_prime + (q - p)
    _, q_idx = reference.nearest_indices(q_hat)
    q_prime = reference.points[q_idx]
    pq = q - p
    pq_ref = q_prime - p_prime
    ok = np.einsum("ij,ij->i", pq_ref, pq_ref) > DEGENERATE_EPS**2
    theta = np.arctan2(pq[:, 1], pq[:, 0])
    theta_ref = np.arctan2(pq_ref[:, 1], pq_ref[:, 0])
    dtheta = angle_diff(theta_ref, theta)
    c, s = np.cos(dtheta), np.sin(dtheta)
    q_rot = np.column_stack([c * q[:, 0] - s * q[:, 1], s * q[:, 0] + c * q[:, 1]])
    delta_t = q_prime - q_rot
    return delta_t, dtheta, contribution_vector(theta_ref), q_idx, ok


def pair_hypothesis(p, q, p_prime, reference: CartesianScan) -> Hypothesis | None:
    """One hypothesis from the correspondence ``p ~ p'``; ``None`` if ``q' == p'``."""
    p, q, p_prime = (np.asarray(v, dtype=float).reshape(1, 2) for v in (p, q, p_prime))
    if np.allclose(p, q, rtol=0, atol=0):
        raise ValueError("p and q must differ")
    dt, dth, psi, _, ok = _pair_hypotheses(p, q, p_prime, reference)
    if not ok[0]:
        return None
    return Hypothesis(dt[0], float(dth[0]), psi[0])


def generate_hypotheses(current: CartesianScan, reference: CartesianScan,
                        params: GenParams = GenParams()) -> HypothesisSet:
    """Draw at least ``n_hypotheses`` weighted hypotheses.

    Sampling proceeds in rounds: each round draws just enough anchor points
    ``p`` to reach the target if every one of them yields ``K`` hypotheses,
    so the output never exceeds ``N + K - 1``. Anchors with an empty
    neighbour set and degenerate pairs count as failures; after
    ``max_failures_factor * N`` of them the run is aborted.
    """
    if len(current) < 2 or len(reference) < 2:
        raise HypothesisGenerationError("both scans need at least two points")
    rng = np.random.default_rng(params.rng_seed)
    cur = current.points
    k = min(params.k, len(reference))
    n_target = params.n_hypotheses
    max_failures = params.max_failures_factor * n_target
    failures = 0
    chunks: list[tuple] = []
    total = 0

    indptr, nbr = current.neighbor_table(params.d_min, params.d_max)
    counts = np.diff(indptr)

    while total < n_target:
        m = -(-(n_target - total) // k)
        p_idx = rng.integers(len(cur), size=m)
        u = rng.random(m)
        has = counts[p_idx] > 0
        failures += int(np.count_nonzero(~has))
        anchors = p_idx[has]
        pick = np.minimum((u[has] * counts[anchors]).astype(int), counts[anchors] - 1)
        partners = nbr[indptr[anchors] + pick]
        if anchors.size:
            a, b = anchors, partners
            _, pp_idx = reference.k_nearest_indices(cur[a], k)  # (m', k)
            p = np.repeat(cur[a], k, axis=0)
            q = np.repeat(cur[b], k, axis=0)
            pp = reference.points[pp_idx.ravel()]
            dt, dth, psi, qq_idx, ok = _pair_hypotheses(p, q, pp, reference)
            failures += int(np.count_nonzero(~ok))
            src = np.column_stack([np.repeat(a, k), np.repeat(b, k), pp_idx.ravel(), qq_idx])
            chunks.append((dt[ok], dth[ok], psi[ok], src[ok]))
            total += int(np.count_nonzero(ok))
        if total < n_target and failures >= max_failures:
            raise HypothesisGenerationError(
                f"gave up after {failures} failed samples with {total}/{n_target} hypotheses; "
                f"check d_min={params.d_min}, d_max={params.d_max} against the point spacing")

    dt, dth, psi, src = (np.concatenate(c) for c in zip(*chunks))
    return HypothesisSet(dt, dth, psi, src)
