"""Benchmark harness: run matchers over scan pairs, score them, write CSV.

Scan pairs come either from a synthetic room sequence or from a CARMEN log
(consecutive records). Each pair is matched by every configured matcher and
timed end to end, including building the spatial indexes of both scans.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .baselines import IterativeParams, icp_match, idc_match
from .carmen import (FOV_PARAM, MAX_RANGE_PARAM, LaserRecord, dumps_carmen, load_carmen, relative_truth,
                     to_polar_scan)
from .clustering import ClusteringError, ClusterParams, match_scans
from .geometry import Pose2, Transform2, angle_diff
from .hypotheses import GenParams, HypothesisGenerationError
from .scan import CartesianScan
from .simulate import (Environment, SensorModel, raytrace_scan, table2_trajectory,
                       trajectory_poses)

log = logging.getLogger(__name__)

RECORDS_SCHEMA = "mhsm-records/1"
MATCHERS = ("mhsm", "icp", "idc")
SIG_DIGITS = 9


class BenchError(RuntimeError):
    """Input problems that should end a run with a clean error message."""


def _q(v: float) -> float:
    """Round to the precision written to CSV, so re-reading is exact."""
    return float(f"{float(v):.{SIG_DIGITS}g}")


def pair_errors(truth: Transform2, estimate: Transform2) -> tuple[float, float]:
    """Translation error (metres) and absolute wrapped rotation error (radians)."""
    et = math.hypot(estimate.tx - truth.tx, estimate.ty - truth.ty)
    er = abs(angle_diff(estimate.rotation, truth.rotation))
    return et, er


@dataclass(frozen=True)
class MatchRecord:
    pair_index: int
    matcher: str
    truth: Transform2
    estimate: Transform2
    trans_error: float
    rot_error: float
    runtime: float  # ms, index construction included
    index_runtime: float = 0.0  # ms spent building the two k-d trees
    status: str = "ok"

    @classmethod
    def create(cls, pair_index: int, matcher: str, truth: Transform2, estimate: Transform2,
               runtime: float, index_runtime: float = 0.0, status: str = "ok") -> "MatchRecord":
        truth = Transform2(*(_q(v) for v in truth.as_tuple()))
        estimate = Transform2(*(_q(v) for v in estimate.as_tuple()))
        et, er = pair_errors(truth, estimate)
        return cls(pair_index, matcher, truth, estimate, _q(et), _q(er), _q(runtime), _q(index_runtime), status)


@dataclass
class BenchSummary:
    matcher: str
    n_pairs: int
    n_failed: int
    mean_rms_translation: float  # m
    mean_rms_rotation: float  # rad
    mean_runtime: float  # ms
    runtime_variance: float  # ms^2
    fraction_below_1m: float = 0.0
    error_cdf: list[tuple[float, float]] = field(default_factory=list)


@dataclass(frozen=True)
class BenchConfig:
    input: str | None = None  # CARMEN log path; None runs the synthetic room
    matchers: tuple[str, ...] = ("mhsm", "idc")
    pairs: int | None = None
    seed: int = 0
    gen: GenParams = GenParams()
    cluster: ClusterParams = ClusterParams()
    iterative: IterativeParams = IterativeParams()
    sensor: SensorModel = SensorModel()
    fov: float | None = None  # radians, overrides the log's PARAM
    max_range: float | None = None
    truth_field: str = "laser_pose"
    ma_window: int = 50
    workers: int = 1
    warmup: bool = True
    cdf_thresholds: tuple[float, ...] | None = None


# --- scan pairs ------------------------------------------------------------

@dataclass
class ScanPair:
    index: int
    reference: np.ndarray  # (n, 2) points
    current: np.ndarray
    truth: Transform2  # maps current points into the reference frame


def random_trajectory(n_steps: int, rng: np.random.Generator, env: Environment | None = None,
                      max_step: float = 0.3, max_turn: float = math.radians(30.0),
                      margin: float = 0.6) -> list[Transform2]:
    """Random walk of relative steps that keeps the sensor ``margin`` inside the room."""
    env = env or Environment.rectangle()
    lo = env.segments.reshape(-1, 2).min(axis=0) + margin
    hi = env.segments.reshape(-1, 2).max(axis=0) - margin
    pose, steps = Pose2(), []
    while len(steps) < n_steps:
        step = Transform2(*rng.uniform(-max_step, max_step, 2), rng.uniform(-max_turn, max_turn))
        nxt = pose.moved(step)
        if np.all(nxt.position >= lo) and np.all(nxt.position <= hi):
            steps.append(step)
            pose = nxt
    return steps


def synthetic_records(n_pairs: int | None, sensor: SensorModel, seed: int,
                      env: Environment | None = None) -> list[LaserRecord]:
    """The six-step benchmark sequence, or a random walk in the same room when more pairs are wanted."""
    env = env or Environment.rectangle()
    rng = np.random.default_rng(seed)
    if n_pairs is None or n_pairs <= 6:
        steps = table2_trajectory()[: n_pairs if n_pairs is not None else 6]
    else:
        steps = random_trajectory(n_pairs, rng, env)
    poses = trajectory_poses(steps)
    out = []
    for k, pose in enumerate(poses):
        scan = raytrace_scan(env, pose, sensor, rng)
        out.append(LaserRecord(scan.ranges, pose, pose, 0.1 * k, host="sim", logger_timestamp=0.1 * k))
    return out


def synthetic_log_text(n_pairs: int | None, sensor: SensorModel, seed: int) -> str:
    params = {FOV_PARAM: repr(math.degrees(sensor.fov)), MAX_RANGE_PARAM: repr(sensor.max_range)}
    return dumps_carmen(synthetic_records(n_pairs, sensor, seed), params)


def load_pairs(config: BenchConfig) -> list[ScanPair]:
    if config.input is None:
        records = synthetic_records(config.pairs, config.sensor, config.seed)
        fov = config.sensor.fov if config.fov is None else config.fov
        max_range = config.sensor.max_range if config.max_range is None else config.max_range
    else:
        path = Path(config.input)
        try:
            carmen = load_carmen(path)
        except OSError as exc:
            raise BenchError(f"cannot read log {path}: {exc}") from exc
        if carmen.warnings:
            log.warning("%s: %d malformed FLASER lines skipped", path, carmen.warnings)
        records = carmen.records
        fov, max_range = carmen.scan_geometry(config.fov, config.max_range)
    n = len(records) - 1
    if config.pairs is not None:
        n = min(n, config.pairs)
    if n < 1:
        raise BenchError("no scan pairs to match (need at least two laser records)")
    pts = [to_polar_scan(r, fov, max_range).to_cartesian().points for r in records[: n + 1]]
    return [ScanPair(k, pts[k], pts[k + 1], relative_truth(records[k], records[k + 1], config.truth_field))
            for k in range(n)]


# --- matching --------------------------------------------------------------

def pair_seeds(seed: int, pair_index: int) -> tuple[int, int]:
    """Independent generator seeds for hypothesis sampling and cluster seeding."""
    a, b = np.random.SeedSequence([seed, pair_index]).generate_state(2)
    return int(a), int(b)


def _run_matcher(name: str, cur: CartesianScan, ref: CartesianScan, config: BenchConfig,
                 pair_index: int) -> tuple[Transform2, str]:
    if name == "mhsm":
        gs, cs = pair_seeds(config.seed, pair_index)
        try:
            res = match_scans(cur, ref, replace(config.gen, rng_seed=gs), replace(config.cluster, rng_seed=cs))
        except (HypothesisGenerationError, ClusteringError) as exc:
            log.warning("pair %d: mhsm failed: %s", pair_index, exc)
            return Transform2(), "failed"
        return res.best, "ok"
    fn = icp_match if name == "icp" else idc_match
    try:
        res = fn(cur, ref, params=config.iterative)
    except ValueError as exc:
        log.warning("pair %d: %s failed: %s", pair_index, name, exc)
        return Transform2(), "failed"
    return res.transform, "degraded" if res.degraded else "ok"


def timed_match(name: str, pair: ScanPair, config: BenchConfig,
                scan_factory: Callable[[np.ndarray], CartesianScan] = CartesianScan) -> MatchRecord:
    """Match one pair from raw points; the clock covers index building and matching."""
    t0 = time.perf_counter()
    cur = scan_factory(pair.current)
    ref = scan_factory(pair.reference)
    t1 = time.perf_counter()
    est, status = _run_matcher(name, cur, ref, config, pair.index)
    t2 = time.perf_counter()
    return MatchRecord.create(pair.index, name, pair.truth, est, (t2 - t0) * 1e3, (t1 - t0) * 1e3, status)


def _match_pair(args) -> list[MatchRecord]:
    pair, config = args
    return [timed_match(m, pair, config) for m in config.matchers]


def run_benchmark(config: BenchConfig) -> tuple[list[MatchRecord], dict[str, BenchSummary]]:
    """Match every pair with every configured matcher and summarise per matcher."""
    bad = [m for m in config.matchers if m not in MATCHERS]
    if bad or not config.matchers:
        raise BenchError(f"unknown matcher(s) {bad}; choose from {MATCHERS}")
    pairs = load_pairs(config)
    if config.warmup:
        # First calls pay for lazy imports and allocator warm-up; keep that out of the numbers.
        _match_pair((pairs[0], config))
    jobs = [(p, config) for p in pairs]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            batches = list(ex.map(_match_pair, jobs, chunksize=max(1, len(jobs) // (4 * config.workers))))
    else:
        batches = [_match_pair(j) for j in jobs]
    order = {m: i for i, m in enumerate(config.matchers)}
    records = sorted((r for b in batches for r in b), key=lambda r: (r.pair_index, order[r.matcher]))
    return records, summarize(records, config.cdf_thresholds)


# --- statistics ------------------------------------------------------------

def _errors(records: Iterable[MatchRecord], metric: str) -> np.ndarray:
    attr = {"translation": "trans_error", "rotation": "rot_error"}[metric]
    return np.array([getattr(r, attr) for r in records], dtype=float)


def default_thresholds(errors: np.ndarray, n: int = 100) -> list[float]:
    """Evenly spaced thresholds whose last one sits just above the largest error."""
    top = float(np.max(errors)) if len(errors) else 0.0
    top = np.nextafter(top, np.inf)
    return list(np.linspace(0.0, top, n + 1)[1:])


def error_cdf(records: list[MatchRecord], thresholds: Iterable[float] | None = None,
              metric: str = "translation") -> list[tuple[float, float]]:
    """Fraction of records whose error is strictly below each threshold."""
    if not records:
        raise ValueError("error_cdf needs at least one record")
    e = np.sort(_errors(records, metric))
    ts = default_thresholds(e) if thresholds is None else sorted(float(t) for t in thresholds)
    counts = np.searchsorted(e, ts, side="left")
    return [(t, float(c) / len(e)) for t, c in zip(ts, counts)]


def summarize(records: list[MatchRecord], thresholds: Iterable[float] | None = None) -> dict[str, BenchSummary]:
    out = {}
    for name in dict.fromkeys(r.matcher for r in records):
        rs = [r for r in records if r.matcher == name]
        et, er = _errors(rs, "translation"), _errors(rs, "rotation")
        rt = np.array([r.runtime for r in rs])
        out[name] = BenchSummary(
            matcher=name,
            n_pairs=len(rs),
            n_failed=sum(r.status == "failed" for r in rs),
            mean_rms_translation=float(np.sqrt(np.mean(et**2))),
            mean_rms_rotation=float(np.sqrt(np.mean(er**2))),
            mean_runtime=float(rt.mean()),
            runtime_variance=float(rt.var()),
            fraction_below_1m=float(np.mean(et < 1.0)),
            error_cdf=error_cdf(rs, thresholds),
        )
    return out


def moving_average(values, window: int) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average what is available."""
    v = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


# --- CSV -------------------------------------------------------------------

RECORD_COLUMNS = ["pair_index", "matcher", "truth_x", "truth_y", "truth_theta",
                  "est_x", "est_y", "est_theta", "trans_error", "rot_error",
                  "runtime_ms", "index_runtime_ms", "status"]


def _fmt(v: float) -> str:
    return f"{v:.{SIG_DIGITS}g}"


def write_records(records: Iterable[MatchRecord], path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {RECORDS_SCHEMA} angles in radians, runtimes in milliseconds\n")
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([r.pair_index, r.matcher, *map(_fmt, r.truth.as_tuple()), *map(_fmt, r.estimate.as_tuple()),
                        _fmt(r.trans_error), _fmt(r.rot_error), _fmt(r.runtime), _fmt(r.index_runtime), r.status])


def read_records(path: str | Path) -> list[MatchRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#") or RECORDS_SCHEMA not in first:
            raise BenchError(f"{path}: not a {RECORDS_SCHEMA} records file")
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        try:
            f = {k: float(row[k]) for k in RECORD_COLUMNS if k not in ("pair_index", "matcher", "status")}
            out.append(MatchRecord(
                int(row["pair_index"]), row["matcher"],
                Transform2(f["truth_x"], f["truth_y"], f["truth_theta"]),
                Transform2(f["est_x"], f["est_y"], f["est_theta"]),
                f["trans_error"], f["rot_error"], f["runtime_ms"], f["index_runtime_ms"], row["status"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise BenchError(f"{path}: bad row {row}: {exc}") from exc
    return out


SUMMARY_COLUMNS = ["matcher", "n_pairs", "n_failed", "rms_translation_m", "rms_rotation_rad",
                   "mean_runtime_ms", "runtime_variance_ms2", "fraction_trans_below_1m"]


def write_summary(summaries: dict[str, BenchSummary], path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries.values():
            w.writerow([s.matcher, s.n_pairs, s.n_failed, _fmt(s.mean_rms_translation), _fmt(s.mean_rms_rotation),
                        _fmt(s.mean_runtime), _fmt(s.runtime_variance), _fmt(s.fraction_below_1m)])


def write_cdf(records: list[MatchRecord], path: str | Path, thresholds: Iterable[float] | None = None):
    thresholds = None if thresholds is None else list(thresholds)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["matcher", "metric", "threshold", "fraction"])
        for name in dict.fromkeys(r.matcher for r in records):
            rs = [r for r in records if r.matcher == name]
            for metric in ("translation", "rotation"):
                for t, f in error_cdf(rs, thresholds if metric == "translation" else None, metric):
                    w.writerow([name, metric, _fmt(t), _fmt(f)])


def write_moving_average(records: list[MatchRecord], window: int, path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_index", "matcher", "trans_error_ma", "rot_error_ma", "runtime_ma_ms"])
        for name in dict.fromkeys(r.matcher for r in records):
            rs = [r for r in records if r.matcher == name]
            cols = [moving_average([getattr(r, a) for r in rs], window)
                    for a in ("trans_error", "rot_error", "runtime")]
            for r, a, b, c in zip(rs, *cols):
                w.writerow([r.pair_index, name, _fmt(a), _fmt(b), _fmt(c)])


def format_summary(summaries: dict[str, BenchSummary]) -> str:
    """Human-readable table; rotations in degrees."""
    lines = [f"{'matcher':<8}{'pairs':>7}{'failed':>8}{'rms t [m]':>12}{'rms r [deg]':>13}"
             f"{'<1 m':>8}{'mean [ms]':>11}{'var [ms2]':>11}"]
    for s in summaries.values():
        lines.append(f"{s.matcher:<8}{s.n_pairs:>7d}{s.n_failed:>8d}{s.mean_rms_translation:>12.4f}"
                     f"{math.degrees(s.mean_rms_rotation):>13.3f}{s.fraction_below_1m:>8.2f}"
                     f"{s.mean_runtime:>11.2f}{s.runtime_variance:>11.2f}")
    return "\n".join(lines)
