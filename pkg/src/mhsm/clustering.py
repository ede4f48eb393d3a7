"""Hybrid Gaussian x von Mises mean-shift over roto-translation hypotheses.

Every cluster is a kernel over the plane (mean, covariance) times a kernel
over the circle (mean angle, concentration). The translation term measures
the Mahalanobis distance of each hypothesis only along its contribution
axis, so a hypothesis contributes to the translation estimate just in the
direction it actually constrains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import Transform2, angle_diff, wrap_angle
from .hypotheses import GenParams, HypothesisSet, generate_hypotheses
from .scan import CartesianScan

DEAD_WEIGHT = 1e-12


class ClusteringError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClusterParams:
    n_seeds: int = 32
    uniform_seed_fraction: float = 0.25
    sigma0: float = 0.6
    kappa0: float = 10.0
    angle_scale: float = 1.0  # metres per radian in the seeding metric
    max_iterations: int = 30
    d_thr: float = 1e-3
    r_thr: float = 1e-3
    stable_iters: int = 2
    merge_dist: float = 0.05
    merge_angle: float = math.radians(2.0)
    regularization_eps: float = 1e-6
    rng_seed: int = 1

    def __post_init__(self):
        if not 0.0 <= self.uniform_seed_fraction <= 1.0:
            raise ValueError("uniform_seed_fraction must be in [0, 1]")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")


@dataclass(frozen=True)
class Cluster:
    mu: np.ndarray
    sigma: np.ndarray
    theta: float
    kappa: float
    members: int = 1
    iterations: int = 0  # refinement steps taken

    @property
    def transform(self) -> Transform2:
        return Transform2(self.mu[0], self.mu[1], self.theta)


@dataclass
class MatchResult:
    """Candidate transforms with normalised weights, best first."""

    candidates: list[tuple[Transform2, float]] = field(default_factory=list)
    clusters: list[Cluster] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    n_hypotheses: int = 0

    @property
    def best(self) -> Transform2:
        return self.candidates[0][0]

    @property
    def weights(self) -> list[float]:
        return [w for _, w in self.candidates]


def _hyp_arrays(hyps):
    if not isinstance(hyps, HypothesisSet):
        hyps = HypothesisSet.from_list(list(hyps))
    return hyps.delta_t, hyps.delta_theta, hyps.psi


# --- seeding ---------------------------------------------------------------

def seed_clusters(hyps, params: ClusterParams = ClusterParams(),
                  rng_seed: int | None = None) -> list[Cluster]:
    """Mixed seeding: a uniform share, then k-means++ style draws.

    The distance-weighted draws use ``|dmu|^2 + (angle_scale * dtheta)^2``
    to the nearest seed picked so far.
    """
    x, th, _ = _hyp_arrays(hyps)
    n = len(x)
    if n == 0:
        raise ClusteringError("no hypotheses to seed from")
    rng = np.random.default_rng(params.rng_seed if rng_seed is None else rng_seed)
    n_seeds = min(params.n_seeds, n)
    n_uniform = math.ceil(params.uniform_seed_fraction * n_seeds)
    chosen = list(rng.choice(n, size=n_uniform, replace=False)) if n_uniform else []
    if not chosen:
        chosen.append(int(rng.integers(n)))

    def dist2(i):
        d = x - x[i]
        da = np.abs(th - th[i]) % (2 * math.pi)
        da = np.minimum(da, 2 * math.pi - da)
        return np.einsum("ij,ij->i", d, d) + (params.angle_scale * da) ** 2

    best = np.min([dist2(i) for i in chosen], axis=0)
    while len(chosen) < n_seeds:
        cum = np.cumsum(best)
        if cum[-1] > 0:
            i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            i = min(i, n - 1)
        else:
            i = int(rng.integers(n))
        chosen.append(i)
        best = np.minimum(best, dist2(i))

    s0 = params.sigma0**2 * np.eye(2)
    return [Cluster(x[i].copy(), s0.copy(), float(th[i]), params.kappa0) for i in chosen]


# --- kernel ----------------------------------------------------------------

def _inv2(sigma):
    """Closed-form inverse of stacked symmetric 2x2 matrices as ``(a, b, c)``
    with ``inv = [[a, b], [b, c]]``."""
    sxx, sxy, syy = sigma[:, 0, 0], 0.5 * (sigma[:, 0, 1] + sigma[:, 1, 0]), sigma[:, 1, 1]
    det = sxx * syy - sxy * sxy
    return syy / det, -sxy / det, sxx / det


def _regularized(sigma, eps):
    det = sigma[:, 0, 0] * sigma[:, 1, 1] - sigma[:, 0, 1] * sigma[:, 1, 0]
    bad = ~(np.abs(det) > 1e-300)
    if bad.any():
        sigma = sigma.copy()
        sigma[bad] += eps * np.eye(2)
    return sigma


def _log_weights(x, th, psi, mu, sigma, theta, kappa, eps, trig=None):
    """Log membership weights, shape ``(S, n)`` for ``S`` stacked clusters.

    ``m^2 = (s psi)^T inv(Sigma) (s psi)`` with ``s = psi . (x - mu)``,
    which factors as ``s^2 * psi^T inv(Sigma) psi``.
    """
    a, b, c = _inv2(_regularized(sigma, eps))
    if trig is None:
        trig = _HypTerms(x, th, psi)
    s = trig.proj[None] - mu @ trig.psi_t
    quad = np.column_stack([a, 2 * b, c]) @ trig.pp.T
    # kappa cos(th - theta) without per-element trig
    v = (kappa * np.cos(theta))[:, None] * trig.cos[None] + (kappa * np.sin(theta))[:, None] * trig.sin[None]
    return -0.5 * s * s * quad + v


class _HypTerms:
    """Per-hypothesis quantities reused by every refinement step."""

    def __init__(self, x, th, psi):
        self.proj = np.einsum("nj,nj->n", psi, x)  # psi . x
        self.pp = np.column_stack([psi[:, 0] ** 2, psi[:, 0] * psi[:, 1], psi[:, 1] ** 2])
        self.ppx = self.proj[:, None] * psi  # (psi psi^T) x
        self.cos = np.cos(th)
        self.sin = np.sin(th)
        self.psi_t = np.ascontiguousarray(psi.T)
        self.stack = np.column_stack([np.ones(len(th)), self.pp, self.ppx, self.cos, self.sin])


def membership_weight(h, c: Cluster, eps: float = 1e-6) -> float:
    """``exp(-m^2/2 + kappa cos(dtheta))`` for a single hypothesis."""
    lw = _log_weights(
        np.asarray(h.delta_t, dtype=float)[None], np.array([h.delta_theta]),
        np.asarray(h.psi, dtype=float)[None], np.asarray(c.mu, dtype=float)[None],
        np.asarray(c.sigma, dtype=float)[None], np.array([c.theta]), np.array([c.kappa]), eps)
    return float(np.exp(lw[0, 0]))


def _pinv_sym2(a, b, c, rcond=1e-6):
    """Pseudo-inverse of stacked symmetric PSD 2x2 matrices ``[[a, b], [b, c]]``,
    returned as entries ``(a', b', c')``.

    Eigenvalues below ``rcond`` times the largest are treated as zero. For a
    rank-one truncation ``pinv = (A - l2 I) / (l1 (l1 - l2))``, which needs no
    eigenvectors.
    """
    half_tr = 0.5 * (a + c)
    rad = np.sqrt(0.25 * (a - c) ** 2 + b * b)
    l1, l2 = half_tr + rad, half_tr - rad
    full = (l2 > rcond * l1) & (l2 > 0)
    rank1 = ~full & (l1 > 0)
    det = np.where(full, a * c - b * b, 1.0)
    den = np.where(rank1, l1 * (l1 - l2), 1.0)
    ia = np.where(full, c / det, np.where(rank1, (a - l2) / den, 0.0))
    ib = np.where(full, -b / det, np.where(rank1, b / den, 0.0))
    ic = np.where(full, a / det, np.where(rank1, (c - l2) / den, 0.0))
    return ia, ib, ic


def _update(x, th, psi, mu, sigma, theta, kappa, eps, trig=None):
    """One refinement step for ``S`` stacked clusters.

    Returns new ``(mu, sigma, theta, kappa, alive)``. Dead clusters (total
    weight below ``DEAD_WEIGHT``) keep their old parameters.
    """
    if trig is None:
        trig = _HypTerms(x, th, psi)
    w = np.exp(_log_weights(x, th, psi, mu, sigma, theta, kappa, eps, trig))  # (S, n)
    # One product for all weighted sums: [1, psi psi^T, (psi psi^T) x, cos, sin].
    sums = w @ trig.stack  # (S, 8)
    total = sums[:, 0]
    alive = total >= DEAD_WEIGHT
    eta = 1.0 / np.where(alive, total, 1.0)

    # Information-weighted mean: each hypothesis pins the mean only along psi.
    m0, m1, m2 = sums[:, 1], sums[:, 2], sums[:, 3]
    r0 = sums[:, 4] - (m0 * mu[:, 0] + m1 * mu[:, 1])
    r1 = sums[:, 5] - (m1 * mu[:, 0] + m2 * mu[:, 1])
    # Directions no hypothesis constrains keep the old mean.
    ia, ib, ic = _pinv_sym2(m0, m1, m2)
    new_mu = mu + np.column_stack([ia * r0 + ib * r1, ib * r0 + ic * r1])

    # Covariance of the projected deviations (s psi), s = psi . (x - mu').
    s = trig.proj[None] - new_mu @ trig.psi_t
    cov = ((w * s * s) @ trig.pp) * eta[:, None]  # (S, 3)
    new_sigma = np.empty_like(sigma)
    new_sigma[:, 0, 0] = cov[:, 0] + eps
    new_sigma[:, 0, 1] = new_sigma[:, 1, 0] = cov[:, 1]
    new_sigma[:, 1, 1] = cov[:, 2] + eps

    cs, sn = sums[:, 6], sums[:, 7]
    new_theta = wrap_angle(np.arctan2(sn, cs))
    # sum w cos(th - theta') = cos(theta') sum w cos th + sin(theta') sum w sin th
    new_kappa = eta * np.hypot(cs, sn)

    if not alive.all():
        keep = ~alive
        new_mu[keep] = mu[keep]
        new_sigma[keep] = sigma[keep]
        new_theta = np.where(keep, theta, new_theta)
        new_kappa = np.where(keep, kappa, new_kappa)
    return new_mu, new_sigma, new_theta, new_kappa, alive


def _stack(clusters):
    return (np.array([c.mu for c in clusters], dtype=float),
            np.array([c.sigma for c in clusters], dtype=float),
            np.array([c.theta for c in clusters], dtype=float),
            np.array([c.kappa for c in clusters], dtype=float))


def update_cluster(c: Cluster, hyps, eps: float = 1e-6) -> Cluster | None:
    """One mean-shift step for a single cluster; ``None`` when it dies."""
    x, th, psi = _hyp_arrays(hyps)
    mu, sigma, theta, kappa, alive = _update(x, th, psi, *_stack([c]), eps)
    if not alive[0]:
        return None
    return Cluster(mu[0], sigma[0], float(theta[0]), float(kappa[0]), c.members)


def refine(seeds: list[Cluster], hyps, params: ClusterParams = ClusterParams()) -> list[Cluster]:
    """Iterate every seed until its shift stays below threshold.

    Converged seeds are frozen while the rest keep moving. Clusters that
    lose all their weight are dropped; if none survive, ``ClusteringError``.
    """
    if not seeds:
        raise ClusteringError("no seeds to refine")
    if params.max_iterations <= 0:
        return list(seeds)
    x, th, psi = _hyp_arrays(hyps)
    trig = _HypTerms(x, th, psi)
    mu, sigma, theta, kappa = _stack(seeds)
    s = len(seeds)
    active = np.ones(s, dtype=bool)
    alive = np.ones(s, dtype=bool)
    stable = np.zeros(s, dtype=int)
    iterations = np.zeros(s, dtype=int)

    for _ in range(params.max_iterations):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        nmu, nsig, nth, nk, ok = _update(x, th, psi, mu[idx], sigma[idx], theta[idx], kappa[idx],
                                         params.regularization_eps, trig)
        shift_t = np.linalg.norm(nmu - mu[idx], axis=1)
        shift_r = np.abs(angle_diff(nth, theta[idx]))
        mu[idx], sigma[idx], theta[idx], kappa[idx] = nmu, nsig, nth, nk
        iterations[idx] += 1
        small = (shift_t < params.d_thr) & (shift_r < params.r_thr)
        stable[idx] = np.where(small, stable[idx] + 1, 0)
        dead = idx[~ok]
        alive[dead] = False
        active[dead] = False
        active[idx[stable[idx] >= params.stable_iters]] = False

    if not alive.any():
        raise ClusteringError("every cluster lost its support during refinement")
    return [Cluster(mu[i].copy(), sigma[i].copy(), float(theta[i]), float(kappa[i]), seeds[i].members,
                    int(iterations[i]))
            for i in np.flatnonzero(alive)]


# --- merging and weighting -------------------------------------------------

def _circular_mean(angles, weights=None) -> float:
    angles = np.asarray(angles, dtype=float)
    return float(np.arctan2(np.average(np.sin(angles), weights=weights),
                            np.average(np.cos(angles), weights=weights)))


def _merge_once(clusters: list[Cluster], params: ClusterParams) -> list[Cluster]:
    mu, sigma, theta, kappa = _stack(clusters)
    d = np.linalg.norm(mu[:, None] - mu[None], axis=2)
    r = np.abs(angle_diff(theta[:, None], theta[None]))
    link = (d < params.merge_dist) & (r < params.merge_angle)
    n_comp, labels = connected_components(coo_matrix(link), directed=False)
    if n_comp == len(clusters):
        return list(clusters)
    count = np.bincount(labels, minlength=n_comp)
    mean_mu = np.column_stack([np.bincount(labels, mu[:, j], n_comp) for j in range(2)]) / count[:, None]
    mean_sig = np.stack([np.bincount(labels, sigma[:, i, j], n_comp) for i in range(2) for j in range(2)],
                        axis=1).reshape(n_comp, 2, 2) / count[:, None, None]
    mean_th = np.arctan2(np.bincount(labels, np.sin(theta), n_comp), np.bincount(labels, np.cos(theta), n_comp))
    mean_k = np.bincount(labels, kappa, n_comp) / count
    members = np.bincount(labels, [c.members for c in clusters], n_comp).astype(int)
    return [Cluster(mean_mu[c], mean_sig[c], float(mean_th[c]), float(mean_k[c]), int(members[c]))
            for c in range(n_comp)]


def merge_connected(clusters: list[Cluster], params: ClusterParams = ClusterParams()) -> list[Cluster]:
    """Fuse clusters linked (transitively) by sub-threshold distance and angle.

    Each component becomes the plain mean of its members. Passes repeat
    until no two merged means are within threshold of each other.
    """
    out = list(clusters)
    for _ in range(max(len(out), 1)):
        if len(out) <= 1:
            break
        nxt = _merge_once(out, params)
        if len(nxt) == len(out):
            break
        out = nxt
    return out


def average_squared_residual(t: Transform2, current: CartesianScan, reference: CartesianScan) -> float:
    moved = t.apply(current.points)
    d, _ = reference.nearest_indices(moved)
    return float(np.mean(d * d))


def asr_weights(asr) -> np.ndarray:
    """Normalised inverse-ASR weights; exact alignments (ASR 0) share all the weight."""
    asr = np.asarray(asr, dtype=float)
    zero = asr == 0
    if zero.any():
        return zero / zero.sum()
    inv = 1.0 / asr
    return inv / inv.sum()


def weight_clusters(clusters: list[Cluster], current: CartesianScan,
                    reference: CartesianScan) -> MatchResult:
    """Score each cluster's transform by inverse average squared residual."""
    if not clusters:
        raise ClusteringError("no clusters to weight")
    n = len(current)
    moved = np.concatenate([c.transform.apply(current.points) for c in clusters])
    d, _ = reference.nearest_indices(moved)
    asr = (d * d).reshape(len(clusters), n).mean(axis=1)
    w = asr_weights(asr)
    order = np.argsort(-w, kind="stable")
    return MatchResult(
        candidates=[(clusters[i].transform, float(w[i])) for i in order],
        clusters=[clusters[i] for i in order],
        residuals=[float(asr[i]) for i in order],
    )


def match_scans(current: CartesianScan, reference: CartesianScan,
                gen: GenParams = GenParams(), clus: ClusterParams = ClusterParams()) -> MatchResult:
    """Full pipeline: hypotheses, seeding, refinement, merging, weighting.

    The returned transform maps points of ``current`` into the frame of
    ``reference``.
    """
    hyps = generate_hypotheses(current, reference, gen)
    seeds = seed_clusters(hyps, clus)
    clusters = refine(seeds, hyps, clus)
    clusters = merge_connected(clusters, clus)
    result = weight_clusters(clusters, current, reference)
    result.n_hypotheses = len(hyps)
    return result


__all__ = [
    "Cluster", "ClusterParams", "ClusteringError", "MatchResult", "asr_weights", "average_squared_residual",
    "match_scans", "membership_weight", "merge_connected", "refine", "seed_clusters",
    "update_cluster", "weight_clusters",
]
