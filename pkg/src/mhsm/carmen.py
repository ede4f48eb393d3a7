"""Reading and writing CARMEN robot logs (FLASER laser messages).

Only ``FLASER`` lines become records; ``PARAM`` lines are kept as a string
dictionary so a log can describe its own laser geometry. Everything else
(``ODOM``, ``SYNC``, comments) is skipped.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .geometry import Pose2, Transform2
from .scan import PolarScan, beam_angles

log = logging.getLogger(__name__)

# PARAM keys understood when turning records into scans.
FOV_PARAM = "laser_front_laser_fov"  # degrees
MAX_RANGE_PARAM = "laser_front_laser_maxrange"  # metres

DEFAULT_FOV = math.pi
DEFAULT_MAX_RANGE = 50.0


@dataclass(frozen=True)
class LaserRecord:
    ranges: np.ndarray
    laser_pose: Pose2
    odom_pose: Pose2
    timestamp: float
    host: str = "nohost"
    logger_timestamp: float | None = None

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=float).ravel()
        if np.any(r < 0):
            raise ValueError("ranges must be >= 0")
        object.__setattr__(self, "ranges", r)


@dataclass
class CarmenLog:
    records: list[LaserRecord] = field(default_factory=list)
    params: dict[str, str] = field(default_factory=dict)
    warnings: int = 0

    def scan_geometry(self, fov: float | None = None, max_range: float | None = None) -> tuple[float, float]:
        """Field of view (radians) and max range, explicit values first, then PARAMs, then defaults."""
        if fov is None:
            fov = math.radians(float(self.params[FOV_PARAM])) if FOV_PARAM in self.params else DEFAULT_FOV
        if max_range is None:
            max_range = float(self.params.get(MAX_RANGE_PARAM, DEFAULT_MAX_RANGE))
        return fov, max_range

    def polar_scans(self, fov: float | None = None, max_range: float | None = None) -> list[PolarScan]:
        return [to_polar_scan(r, *self.scan_geometry(fov, max_range)) for r in self.records]


def to_polar_scan(record: LaserRecord, fov: float = DEFAULT_FOV,
                  max_range: float = DEFAULT_MAX_RANGE) -> PolarScan:
    """Readings beyond ``max_range`` are clamped to it and so count as no return."""
    n = len(record.ranges)
    return PolarScan(np.minimum(record.ranges, max_range), beam_angles(n, fov), max_range)


def _parse_flaser(tokens: list[str]) -> LaserRecord | None:
    try:
        n = int(tokens[1])
    except (IndexError, ValueError):
        return None
    if n < 0 or len(tokens) - 2 != n + 9:
        return None
    try:
        ranges = [float(v) for v in tokens[2:2 + n]]
        x, y, th, ox, oy, oth, ts = (float(v) for v in tokens[2 + n:9 + n])
        log_ts = float(tokens[10 + n])
    except ValueError:
        return None
    if any(r < 0 or not math.isfinite(r) for r in ranges):
        return None
    return LaserRecord(np.array(ranges), Pose2(x, y, th), Pose2(ox, oy, oth), ts,
                       host=tokens[9 + n], logger_timestamp=log_ts)


def read_carmen(stream: TextIO | Iterable[str]) -> CarmenLog:
    """Single pass over a log. Malformed FLASER lines are counted and skipped."""
    out = CarmenLog()
    for lineno, line in enumerate(stream, 1):
        tokens = line.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        if tokens[0] == "PARAM" and len(tokens) >= 3:
            out.params[tokens[1]] = tokens[2]
        elif tokens[0] == "FLASER":
            rec = _parse_flaser(tokens)
            if rec is None:
                out.warnings += 1
                log.warning("line %d: malformed FLASER message skipped", lineno)
            else:
                out.records.append(rec)
    return out


def parse_carmen_log(stream: TextIO | Iterable[str]) -> list[LaserRecord]:
    return read_carmen(stream).records


def load_carmen(path: str | Path) -> CarmenLog:
    with open(path, encoding="utf-8") as fh:
        return read_carmen(fh)


def _num(v: float) -> str:
    # Shortest repr that reads back to the same double.
    return repr(float(v))


def format_flaser(record: LaserRecord) -> str:
    p, o = record.laser_pose, record.odom_pose
    log_ts = record.timestamp if record.logger_timestamp is None else record.logger_timestamp
    fields = ["FLASER", str(len(record.ranges)), *(_num(r) for r in record.ranges),
              *(_num(v) for v in (p.x, p.y, p.theta, o.x, o.y, o.theta, record.timestamp)),
              record.host, _num(log_ts)]
    return " ".join(fields)


def write_carmen(records: Iterable[LaserRecord], stream: TextIO, params: dict[str, str] | None = None):
    for key, value in (params or {}).items():
        stream.write(f"PARAM {key} {value}\n")
    for rec in records:
        stream.write(format_flaser(rec) + "\n")


def dumps_carmen(records: Iterable[LaserRecord], params: dict[str, str] | None = None) -> str:
    buf = io.StringIO()
    write_carmen(records, buf, params)
    return buf.getvalue()


def relative_truth(a: LaserRecord | Pose2, b: LaserRecord | Pose2, field_name: str = "laser_pose") -> Transform2:
    """Motion from pose ``a`` to pose ``b`` expressed in ``a``'s frame.

    This is also the transform that maps points of scan ``b`` into the
    frame of scan ``a``.
    """
    pa = getattr(a, field_name) if isinstance(a, LaserRecord) else a
    pb = getattr(b, field_name) if isinstance(b, LaserRecord) else b
    return pb.relative_to(pa)
