"""Fixtures shared by the unit tests and the acceptance gate."""

import numpy as np

from regbench.cloud import PointCloud
from regbench.transform import RigidTransform, axis_angle_matrix


def random_transform(rng, max_trans=5.0):
    axis = rng.normal(size=3)
    r = axis_angle_matrix(axis / np.linalg.norm(axis), rng.uniform(0.0, np.pi))
    return RigidTransform(r, rng.uniform(-max_trans, max_trans, 3))


def four_point_cloud():
    return PointCloud(np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]]))


def line_cloud(start, n=10, step=1.0):
    xs = start + step * np.arange(n)
    return PointCloud(np.c_[xs, np.zeros(n), np.zeros(n)])


def box_surface(rng, n, dims):
    """Uniform-ish samples on the faces of an axis-aligned box at the origin."""
    dims = np.asarray(dims, dtype=float)
    areas = np.array([dims[1] * dims[2], dims[0] * dims[2], dims[0] * dims[1]])
    axis = rng.choice(3, size=n, p=areas / areas.sum())
    pts = rng.uniform(0.0, 1.0, (n, 3)) * dims
    pts[np.arange(n), axis] = dims[axis] * rng.integers(0, 2, n)
    return pts


def box_assembly(seed=0):
    """Three stacked boxes: an asymmetric, fully constrained test object."""
    rng = np.random.default_rng(seed)
    parts = [
        box_surface(rng, 1500, [4, 3, 2]),
        box_surface(rng, 500, [1, 1, 1.5]) + [3.0, 2.0, 2.0],
        box_surface(rng, 400, [0.8, 1.6, 0.8]) + [-0.8, 0.5, 0.0],
    ]
    return PointCloud(np.vstack(parts))


def wedge(rng, n, x0, x1, angle_deg=30.0):
    """Floor z=0 for y in [0, 5] joined to a plane rising at ``angle_deg`` beyond y=5."""
    floor = np.c_[rng.uniform(x0, x1, n), rng.uniform(0, 5, n), np.zeros(n)]
    th = np.radians(angle_deg)
    u = rng.uniform(0, 5, n)
    slope = np.c_[rng.uniform(x0, x1, n), 5 + u * np.cos(th), u * np.sin(th)]
    return np.vstack([floor, slope])


def wedge_surface_distance(points, angle_deg=30.0):
    """Mean distance from points to the wedge's two planes."""
    th = np.radians(angle_deg)
    normal = np.array([0.0, -np.sin(th), np.cos(th)])
    d_floor = np.abs(points[:, 2])
    d_slope = np.abs((points - [0.0, 5.0, 0.0]) @ normal)
    return float(np.where(points[:, 1] < 5, d_floor, d_slope).mean())


def wedge_pair(seed):
    """Target x in [0, 10], source x in [4, 14]: two planes, partial overlap."""
    rng = np.random.default_rng(seed)
    target = PointCloud(wedge(rng, 1500, 0, 10))
    source = PointCloud(wedge(rng, 1500, 4, 14))
    initial = RigidTransform(axis_angle_matrix([1.0, 0, 0], np.radians(3.0)), [0.0, 0.3, 0.4])
    return source, target, initial


def rigid_gt_noise(cloud, rng, sigma_trans=0.05, max_rot_deg=1.0):
    """A ground-truth error: small rotation about the centroid plus Gaussian translation."""
    from regbench.transform import sample_unit_axis

    r = axis_angle_matrix(sample_unit_axis(rng), rng.uniform(0.0, np.radians(max_rot_deg)))
    pivot = cloud.points.mean(axis=0)
    return RigidTransform(r, pivot - r @ pivot + rng.normal(scale=sigma_trans, size=3))
