"""Multi-hypothesis 2D scan matching with hybrid Gaussian x von Mises mean-shift."""

from .baselines import IterativeParams, IterativeResult, icp_match, idc_match
from .carmen import LaserRecord, parse_carmen_log, read_carmen, relative_truth
from .clustering import Cluster, ClusterParams, MatchResult, match_scans
from .geometry import Pose2, Transform2, angle_diff, apply_transform, rotate, wrap_angle
from .hypotheses import GenParams, HypothesisSet, generate_hypotheses
from .scan import CartesianScan, PolarScan, polar_to_cartesian
from .simulate import Environment, SensorModel, raytrace_scan, simulate_sequence, table2_trajectory

__all__ = [
    "CartesianScan", "Cluster", "ClusterParams", "Environment", "GenParams", "HypothesisSet",
    "IterativeParams", "IterativeResult", "LaserRecord", "MatchResult", "PolarScan", "Pose2",
    "SensorModel", "Transform2", "angle_diff", "apply_transform", "generate_hypotheses", "icp_match",
    "idc_match", "match_scans", "parse_carmen_log", "polar_to_cartesian", "raytrace_scan", "read_carmen",
    "relative_truth", "rotate", "simulate_sequence", "table2_trajectory", "wrap_angle",
]
