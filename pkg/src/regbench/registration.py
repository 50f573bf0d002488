"""Reference registrars: point-to-point ICP and plane-to-plane G-ICP.

Both share one outer loop: voxel-downsample, associate every source point
with its nearest target point, drop associations longer than
``outlier_factor`` times the median, update the pose, repeat until the pose
change is below ``convergence_eps`` or ``max_iterations`` is reached.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cloud import voxel_downsample
from .errors import DegenerateGeometry, NoCorrespondences, SolverDiverged, TooFewPoints
from .spatial import KdIndex
from .transform import RigidTransform, exp_so3, rotation_angle, skew

CONVERGED = "converged"
MAX_ITERS = "max_iters"
FAILED = "failed"


@dataclass(frozen=True)
class RegistrarConfig:
    algorithm: str = "icp"
    voxel_leaf: float = 0.1
    max_iterations: int = 30
    outlier_factor: float = 3.0
    max_corr_distance: float | None = None
    convergence_eps: float = 1e-6
    gicp_k_neighbors: int = 20
    gicp_cov_epsilon: float = 1e-3

    def __post_init__(self):
        if self.algorithm not in REGISTRARS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not self.voxel_leaf > 0:
            raise ValueError("voxel_leaf must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.outlier_factor > 0:
            raise ValueError("outlier_factor must be positive")
        if self.max_corr_distance is not None and not self.max_corr_distance > 0:
            raise ValueError("max_corr_distance must be positive or None")

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class RegistrationResult:
    estimated: RigidTransform
    status: str
    iterations: int
    wall_time: float
    residual: float
    error: str = ""
    # (mean distance before update, mean distance after update) per outer iteration
    history: list = field(default_factory=list, repr=False)


# ----------------------------------------------------------------- closed form


def svd_rigid_align(source, target, weights=None):
    """Weighted least-squares rigid transform mapping ``source`` onto ``target``."""
    a = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if a.shape != b.shape:
        raise ValueError("source and target must have the same shape")
    w = np.ones(len(a)) if weights is None else np.asarray(weights, dtype=np.float64)
    if len(a) < 3 or w.sum() <= 0:
        raise DegenerateGeometry("need at least 3 weighted correspondences")
    w = w / w.sum()
    ca = w @ a
    cb = w @ b
    h = (a - ca).T @ ((b - cb) * w[:, None])
    u, s, vt = np.linalg.svd(h)
    if s[0] == 0.0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateGeometry("cross-covariance has rank < 2")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, cb - r @ ca)


def median_outlier_filter(distances, factor=3.0):
    """Mask keeping associations no longer than ``factor`` times the median."""
    d = np.asarray(distances, dtype=np.float64)
    if d.size == 0:
        return np.zeros(0, dtype=bool)
    return d <= factor * np.median(d)


# ----------------------------------------------------------------- covariances


def estimate_covariances(cloud, k=20, epsilon=1e-3):
    """Plane-like covariance per point from its ``k`` nearest neighbours.

    The neighbourhood's principal directions are kept, its spectrum replaced
    by (1, 1, epsilon) so the smallest direction (the surface normal) is
    tightly constrained.
    """
    pts = np.asarray(getattr(cloud, "points", cloud), dtype=np.float64)
    if k < 3 or len(pts) < k:
        raise TooFewPoints(f"need at least k={k} >= 3 points, got {len(pts)}")
    index = KdIndex(pts)
    _, nbr = index._tree.query(pts, k=k)
    nb = pts[nbr]
    nb = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", nb, nb) / k
    _, vecs = np.linalg.eigh(cov)
    # eigh sorts ascending: column 0 is the normal direction
    spectrum = np.array([epsilon, 1.0, 1.0])
    return np.einsum("nij,j,nkj->nik", vecs, spectrum, vecs)


# ----------------------------------------------------------------- G-ICP cost


def right_jacobian_so3(omega):
    omega = np.asarray(omega, dtype=np.float64)
    theta = float(np.linalg.norm(omega))
    k = skew(omega)
    if theta < 1e-6:
        return np.eye(3) - 0.5 * k + (k @ k) / 6.0
    return (
        np.eye(3)
        - ((1.0 - math.cos(theta)) / theta**2) * k
        + ((theta - math.sin(theta)) / theta**3) * (k @ k)
    )


def _perturbed(xi, points):
    return points @ exp_so3(xi[:3]).T + xi[3:]


def gicp_cost(xi, moved, target, weights):
    """Sum of Mahalanobis residuals after moving ``moved`` by exp(xi).

    ``xi`` holds a rotation vector followed by a translation; ``weights``
    are the per-correspondence inverse combined covariances.
    """
    r = target - _perturbed(np.asarray(xi, dtype=np.float64), moved)
    return float(np.einsum("ni,nij,nj->", r, weights, r))


def gicp_gradient(xi, moved, target, weights):
    xi = np.asarray(xi, dtype=np.float64)
    rot = exp_so3(xi[:3])
    r = target - _perturbed(xi, moved)
    wr = np.einsum("nij,nj->ni", weights, r)
    jr = right_jacobian_so3(xi[:3])
    # d r / d omega = R [q]x Jr ; d r / d v = -I
    qx = _skew_batch(moved)
    dr_dw = np.einsum("ij,njk,kl->nil", rot, qx, jr)
    g_w = 2.0 * np.einsum("nil,ni->l", dr_dw, wr)
    g_v = -2.0 * wr.sum(axis=0)
    return np.concatenate([g_w, g_v])


def _skew_batch(v):
    out = np.zeros((len(v), 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


def _gicp_step(moved, target, weights, max_inner=10):
    """Damped Gauss-Newton on the frozen-weight cost; returns the pose update."""
    total = RigidTransform.identity()
    q = moved
    cost = gicp_cost(np.zeros(6), q, target, weights)
    noise_floor = 1e-12 * cost
    lam = 1e-3
    increases = 0
    for _ in range(max_inner):
        r = target - q
        j = np.zeros((len(q), 3, 6))
        j[:, :, :3] = _skew_batch(q)
        j[:, :, 3:] = -np.eye(3)
        jw = np.einsum("nki,nkl->nil", j, weights)
        hess = np.einsum("nil,nlj->ij", jw, j)
        grad = np.einsum("nil,nl->i", jw, r)
        if np.linalg.norm(grad) <= 1e-12 * max(1.0, cost):
            break
        while True:
            damped = hess + lam * np.diag(np.diag(hess))
            try:
                delta = -np.linalg.solve(damped, grad)
            except np.linalg.LinAlgError:
                delta = -np.linalg.lstsq(damped, grad, rcond=None)[0]
            if np.linalg.norm(delta) < 1e-12:
                return total
            candidate = RigidTransform(exp_so3(delta[:3]), delta[3:])
            cq = candidate.transform_points(q)
            new_cost = gicp_cost(np.zeros(6), cq, target, weights)
            if new_cost <= cost:
                break
            if new_cost - cost <= 1e-10 * cost + noise_floor:
                # rounding noise at the minimum
                return total
            increases += 1
            if increases >= 3:
                raise SolverDiverged("cost increased on 3 consecutive damped steps")
            lam *= 10.0
        increases = 0
        lam = max(lam / 10.0, 1e-9)
        total = candidate @ total
        q = cq
        improvement = cost - new_cost
        cost = new_cost
        if np.linalg.norm(delta) < 1e-10 or improvement <= 1e-15 * max(cost, 1e-300):
            break
    return total


# ----------------------------------------------------------------- outer loop


def _prepared_target(target, leaf):
    def build():
        ds = voxel_downsample(target, leaf)
        return ds.points, KdIndex(ds.points)

    return target.cached(("prepared", leaf), build)


def _target_covariances(target, config, tgt_pts):
    key = ("covariances", config.voxel_leaf, config.gicp_k_neighbors, config.gicp_cov_epsilon)
    return target.cached(
        key, lambda: estimate_covariances(tgt_pts, config.gicp_k_neighbors, config.gicp_cov_epsilon)
    )


def _pose_change(dt):
    return rotation_angle(dt.rotation) + float(np.linalg.norm(dt.translation))


def _register(source, target, initial, config, update, src_cov=None):
    start = time.perf_counter()
    if len(source) == 0 or len(target) == 0:
        raise NoCorrespondences("empty cloud")
    src = voxel_downsample(source, config.voxel_leaf).points
    tgt, index = _prepared_target(target, config.voxel_leaf)
    context = update.prepare(src, tgt, target, config) if hasattr(update, "prepare") else None

    pose = initial
    history = []
    residual = float("nan")
    status = MAX_ITERS
    it = 0

    def fail(err):
        return RegistrationResult(
            initial, FAILED, it, time.perf_counter() - start, residual, f"{type(err).__name__}: {err}", history
        )

    for it in range(1, config.max_iterations + 1):
        moved = pose.transform_points(src)
        ids, dist = index.nearest_many(moved)
        keep = np.ones(len(dist), dtype=bool)
        if config.max_corr_distance is not None:
            keep = dist <= config.max_corr_distance
        if not keep.any():
            return fail(NoCorrespondences(f"no associations at iteration {it}"))
        sel = np.flatnonzero(keep)
        sel = sel[median_outlier_filter(dist[sel], config.outlier_factor)]
        if len(sel) < 3:
            return fail(NoCorrespondences(f"only {len(sel)} associations at iteration {it}"))
        try:
            dt = update(moved[sel], tgt[ids[sel]], pose, sel, ids[sel], context)
        except (DegenerateGeometry, SolverDiverged) as err:
            return fail(err)
        pose = dt @ pose
        after = float(np.linalg.norm(dt.transform_points(moved[sel]) - tgt[ids[sel]], axis=1).mean())
        history.append((float(dist[sel].mean()), after))
        residual = after
        if _pose_change(dt) < config.convergence_eps:
            status = CONVERGED
            break
    return RegistrationResult(pose, status, it, time.perf_counter() - start, residual, "", history)


def _icp_update(a, b, pose, src_ids, tgt_ids, context):
    return svd_rigid_align(a, b)


class _GicpUpdate:
    def prepare(self, src, tgt, target, config):
        return (
            estimate_covariances(src, config.gicp_k_neighbors, config.gicp_cov_epsilon),
            _target_covariances(target, config, tgt),
        )

    def __call__(self, a, b, pose, src_ids, tgt_ids, context):
        src_cov, tgt_cov = context
        r = pose.rotation
        combined = tgt_cov[tgt_ids] + np.einsum("ij,njk,lk->nil", r, src_cov[src_ids], r)
        weights = np.linalg.inv(combined)
        return _gicp_step(a, b, weights)


def icp(source, target, initial=None, config=None):
    config = config or RegistrarConfig()
    return _register(source, target, RigidTransform.identity() if initial is None else initial, config, _icp_update)


def gicp(source, target, initial=None, config=None):
    config = config or RegistrarConfig(algorithm="gicp")
    return _register(source, target, RigidTransform.identity() if initial is None else initial, config, _GicpUpdate())


REGISTRARS = {"icp": icp, "gicp": gicp}


def register(source, target, initial=None, config=None):
    """Dispatch on ``config.algorithm``."""
    config = config or RegistrarConfig()
    return REGISTRARS[config.algorithm](source, target, initial, config)
