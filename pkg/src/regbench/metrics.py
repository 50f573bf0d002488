"""Pose-distance metrics between two placements of a cloud, and overlap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import diameter
from .errors import DegenerateCloud, EmptyCloud, NonPositiveThreshold
from .spatial import index_of

DENOMINATOR_CLAMP = 1e-6


@dataclass(frozen=True)
class MetricValue:
    delta: float
    n_used: int


@dataclass(frozen=True)
class OverlapValue:
    fraction: float
    threshold: float
    direction: str = "source->target"


def _placements(cloud, t_est, t_gt):
    if len(cloud) == 0:
        raise EmptyCloud("metric needs at least one point")
    p = t_est.transform_points(cloud.points)
    g = t_gt.transform_points(cloud.points)
    return p, g


def benchmark_metric(cloud, t_est, t_gt):
    """Mean over points of ||p_i - g_i|| / ||p_i - centroid(P)||.

    P and G are ``cloud`` placed by ``t_est`` and ``t_gt``. The result is
    dimensionless: scaling the scene leaves it unchanged. Distances to the
    centroid are clamped below at 1e-6 of the cloud diameter.
    """
    p, g = _placements(cloud, t_est, t_gt)
    diam = diameter(cloud)
    if diam == 0.0:
        raise DegenerateCloud("all points coincide; the metric is undefined")
    num = np.linalg.norm(p - g, axis=1)
    den = np.maximum(np.linalg.norm(p - p.mean(axis=0), axis=1), DENOMINATOR_CLAMP * diam)
    return MetricValue(float(np.mean(num / den)), len(p))


def unnormalized_metric(cloud, t_est, t_gt):
    """Mean displacement between homologous points, in meters."""
    p, g = _placements(cloud, t_est, t_gt)
    return MetricValue(float(np.mean(np.linalg.norm(p - g, axis=1))), len(p))


def overlap(source, target, threshold, target_index=None):
    """Fraction of ``source`` points with a ``target`` point closer than ``threshold``.

    Both clouds are expected at their ground-truth poses.
    """
    if not threshold > 0:
        raise NonPositiveThreshold(f"threshold must be positive, got {threshold}")
    if len(source) == 0 or len(target) == 0:
        raise EmptyCloud("overlap needs two non-empty clouds")
    index = target_index if target_index is not None else index_of(target)
    hits = index.has_within_many(source.points, threshold)
    return OverlapValue(float(np.count_nonzero(hits)) / len(source), float(threshold))
