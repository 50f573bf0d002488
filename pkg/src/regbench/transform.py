"""Rigid transforms in SE(3) and random perturbation sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import InvalidBounds, NotARotation

ROTATION_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x -> rotation @ x + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        check_rotation(r)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def angle(self):
        return rotation_angle(self.rotation)

    def __matmul__(self, other):
        return compose(self, other)

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    __hash__ = None

    def transform_points(self, pts):
        return np.asarray(pts) @ self.rotation.T + self.translation


def check_rotation(r, tol=ROTATION_TOL, line=None):
    if not np.all(np.isfinite(r)):
        raise NotARotation("rotation has non-finite entries", line)
    err = np.abs(r.T @ r - np.eye(3)).max()
    if err > tol:
        raise NotARotation(f"rotation is not orthonormal (max error {err:.3g})", line)
    det = np.linalg.det(r)
    if abs(det - 1.0) > tol:
        raise NotARotation(f"rotation determinant is {det:.6g}, expected +1", line)


def compose(a, b):
    """The transform that applies ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t):
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def apply(t, cloud):
    pts = cloud.points @ t.rotation.T + t.translation
    cov = cloud.covariances
    if cov is not None:
        cov = t.rotation @ cov @ t.rotation.T
    return PointCloud(pts, frame_label=cloud.frame_label, covariances=cov)


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_angle_matrix(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = skew(axis)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def exp_so3(omega):
    """Rotation matrix for the rotation vector ``omega`` (Rodrigues)."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = float(np.linalg.norm(omega))
    k = skew(omega)
    if theta < 1e-8:
        return np.eye(3) + k + 0.5 * (k @ k)
    return (
        np.eye(3)
        + (math.sin(theta) / theta) * k
        + ((1.0 - math.cos(theta)) / theta**2) * (k @ k)
    )


def rotation_angle(r):
    c = (np.trace(r) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


def to_row_major12(t):
    """t1..t12: the first three rows of the 4x4 homogeneous matrix."""
    return [float(v) for v in t.matrix[:3, :].reshape(-1)]


def from_row_major12(values, line=None):
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    if vals.shape != (12,):
        raise ValueError(f"expected 12 values, got {vals.size}")
    m = vals.reshape(3, 4)
    check_rotation(m[:, :3], line=line)
    return RigidTransform(m[:, :3], m[:, 3])


# ---------------------------------------------------------------- perturbations


@dataclass(frozen=True)
class PerturbationBounds:
    """Uniform ranges for rotation magnitude (radians) and translation norm (meters)."""

    rot_min: float
    rot_max: float
    trans_min: float
    trans_max: float
    regime: str = "local"

    def __post_init__(self):
        if self.regime not in ("local", "global"):
            raise InvalidBounds(f"regime must be 'local' or 'global', got {self.regime!r}")
        for lo, hi, what in (
            (self.rot_min, self.rot_max, "rotation"),
            (self.trans_min, self.trans_max, "translation"),
        ):
            if not (math.isfinite(lo) and math.isfinite(hi)) or not 0 <= lo <= hi:
                raise InvalidBounds(f"{what} bounds must satisfy 0 <= min <= max, got [{lo}, {hi}]")
        if self.rot_max > math.pi + 1e-12:
            raise InvalidBounds("rotation magnitude cannot exceed 180 degrees")

    @classmethod
    def local(cls, trans_min, trans_max, rot_min_deg=0.0, rot_max_deg=45.0):
        return cls(math.radians(rot_min_deg), math.radians(rot_max_deg), trans_min, trans_max, "local")

    @classmethod
    def global_(cls, trans_min, trans_max, rot_min_deg=45.0, rot_max_deg=180.0):
        return cls(math.radians(rot_min_deg), math.radians(rot_max_deg), trans_min, trans_max, "global")


def sample_unit_axis(rng):
    while True:
        v = rng.standard_normal(3)
        n = np.linalg.norm(v)
        if n >= 1e-6:
            return v / n


def sample_perturbation(bounds, pivot, rng):
    """Random rotation about ``pivot`` followed by a random translation.

    Rotation axis and translation direction are independent uniform draws on
    the sphere; both magnitudes are uniform within ``bounds``.
    """
    if not isinstance(bounds, PerturbationBounds):
        raise InvalidBounds("bounds must be a PerturbationBounds")
    axis = sample_unit_axis(rng)
    angle = rng.uniform(bounds.rot_min, bounds.rot_max)
    direction = sample_unit_axis(rng)
    magnitude = rng.uniform(bounds.trans_min, bounds.trans_max)
    r = axis_angle_matrix(axis, angle)
    pivot = np.asarray(pivot, dtype=np.float64)
    return RigidTransform(r, pivot - r @ pivot + magnitude * direction)


def problem_rng(seed, *stream):
    """Independent generator for one (pair, perturbation) slot of a seed."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(s) for s in stream)])
