"""Benchmark toolkit for point-cloud registration."""

from .cloud import PointCloud, centroid, parse_pcd, read_cloud, serialize_pcd, voxel_downsample
from .metrics import benchmark_metric, overlap, unnormalized_metric
from .registration import RegistrarConfig, RegistrationResult, gicp, icp, register
from .transform import PerturbationBounds, RigidTransform, apply, compose, invert

__all__ = [
    "PerturbationBounds",
    "PointCloud",
    "RegistrarConfig",
    "RegistrationResult",
    "RigidTransform",
    "apply",
    "benchmark_metric",
    "centroid",
    "compose",
    "gicp",
    "icp",
    "invert",
    "overlap",
    "parse_pcd",
    "read_cloud",
    "register",
    "serialize_pcd",
    "unnormalized_metric",
    "voxel_downsample",
]
