"""Point clouds, ASCII PCD / XYZ I/O and voxel-grid downsampling."""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadRow,
    CountMismatch,
    EmptyCloud,
    MalformedHeader,
    NonFinitePointsWarning,
    NonPositiveLeaf,
)

PCD_HEADER_KEYS = (
    "VERSION",
    "FIELDS",
    "SIZE",
    "TYPE",
    "COUNT",
    "WIDTH",
    "HEIGHT",
    "VIEWPOINT",
    "POINTS",
    "DATA",
)


VOXEL_EDGE_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered set of 3D points (meters).

    Row ``i`` of ``points`` is the same physical point in every rigidly moved
    copy of the cloud, which is what the pose metric relies on.
    """

    points: np.ndarray
    frame_label: str = ""
    covariances: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1 and pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", _frozen(pts))
        if self.covariances is not None:
            cov = np.asarray(self.covariances, dtype=np.float64)
            if cov.shape != (len(pts), 3, 3):
                raise ValueError(f"covariances must have shape ({len(pts)}, 3, 3)")
            object.__setattr__(self, "covariances", _frozen(cov))

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    __hash__ = None

    def with_points(self, points, covariances=None):
        return PointCloud(points, frame_label=self.frame_label, covariances=covariances)

    def cached(self, key, compute):
        """Memoize a derived quantity; safe because the cloud is immutable."""
        try:
            return self._cache[key]
        except KeyError:
            value = self._cache[key] = compute()
            return value


def _require_points(cloud):
    if len(cloud) == 0:
        raise EmptyCloud("operation requires a non-empty cloud")


def centroid(cloud):
    _require_points(cloud)
    return cloud.points.mean(axis=0)


def diameter(cloud):
    """Largest pairwise distance between points of the cloud.

    Rigid motions leave the diameter unchanged, so the value is cached.
    """
    _require_points(cloud)
    return cloud.cached("diameter", lambda: _diameter(cloud.points))


def _diameter(pts):
    from scipy.spatial import ConvexHull

    if len(pts) < 2:
        return 0.0
    if len(pts) > 500:
        try:
            pts = pts[ConvexHull(pts, qhull_options="QJ").vertices]
        except Exception:
            # qhull rejects some degenerate inputs even when joggled
            pass
    best = 0.0
    for start in range(0, len(pts), 512):
        block = pts[start : start + 512]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def voxel_downsample(cloud, leaf):
    """Replace the points of each occupied voxel by their centroid.

    The grid is anchored at the cloud's minimum corner and the output is
    ordered by lexicographic voxel index.
    """
    if not leaf > 0:
        raise NonPositiveLeaf(f"leaf must be positive, got {leaf}")
    _require_points(cloud)
    pts = cloud.points
    # a point on a voxel face belongs to the upper voxel; the tolerance keeps
    # that true when the subtraction rounds 1.0 down to 0.9999999999999999
    keys = np.floor((pts - pts.min(axis=0)) / leaf + VOXEL_EDGE_TOL).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    out = np.empty((len(uniq), 3))
    for d in range(3):
        out[:, d] = np.bincount(inverse, weights=pts[:, d], minlength=len(uniq)) / counts
    return PointCloud(out, frame_label=cloud.frame_label)


# --------------------------------------------------------------------------- PCD


def _as_lines(stream):
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    return stream


def parse_pcd(stream):
    """Parse an ASCII PCD v0.7 document with at least the fields x, y, z.

    Rows containing NaN/Inf are dropped and a NonFinitePointsWarning
    carrying the count is emitted.
    """
    lines = iter(_as_lines(stream))
    header = {}
    lineno = 0
    data_line = None
    for raw in lines:
        lineno += 1
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        key = key.upper()
        if key not in PCD_HEADER_KEYS:
            raise MalformedHeader(f"unexpected header entry {key!r}", lineno)
        if key in header:
            raise MalformedHeader(f"duplicate header key {key}", lineno)
        header[key] = rest.split()
        if key == "DATA":
            data_line = lineno
            break

    for key in ("FIELDS", "DATA"):
        if key not in header:
            raise MalformedHeader(f"missing header key {key}", lineno)
    if "POINTS" not in header and not ("WIDTH" in header and "HEIGHT" in header):
        raise MalformedHeader("missing header key POINTS", lineno)
    if header["DATA"] != ["ascii"]:
        raise MalformedHeader(
            f"only DATA ascii is supported, got {' '.join(header['DATA'])!r}", data_line
        )

    fields = header["FIELDS"]
    counts = [1] * len(fields)
    if "COUNT" in header:
        try:
            counts = [int(c) for c in header["COUNT"]]
        except ValueError:
            raise MalformedHeader("COUNT entries must be integers", data_line) from None
        if len(counts) != len(fields):
            raise MalformedHeader("COUNT and FIELDS lengths differ", data_line)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    ncols = int(offsets[-1])
    try:
        columns = [int(offsets[fields.index(name)]) for name in ("x", "y", "z")]
    except ValueError:
        raise MalformedHeader("FIELDS must include x, y and z", data_line) from None
    try:
        if "POINTS" in header:
            npoints = int(header["POINTS"][0])
        else:
            npoints = int(header["WIDTH"][0]) * int(header["HEIGHT"][0])
    except (ValueError, IndexError):
        raise MalformedHeader("POINTS must be an integer", data_line) from None

    out = np.empty((npoints, 3))
    row = 0
    for raw in lines:
        lineno += 1
        tokens = raw.split()
        if not tokens:
            continue
        if row >= npoints:
            raise CountMismatch(f"more data rows than POINTS {npoints}", lineno)
        if len(tokens) < ncols:
            raise BadRow(f"expected {ncols} values, got {len(tokens)}", lineno)
        try:
            out[row] = [float(tokens[c]) for c in columns]
        except ValueError:
            raise BadRow(f"non-numeric value in {raw.strip()!r}", lineno) from None
        row += 1
    if row != npoints:
        raise CountMismatch(f"header declares {npoints} points, body has {row}", lineno)
    return PointCloud(_drop_non_finite(out))


def _drop_non_finite(pts):
    keep = np.all(np.isfinite(pts), axis=1)
    dropped = int(len(pts) - keep.sum())
    if dropped:
        warnings.warn(NonFinitePointsWarning(dropped), stacklevel=3)
        pts = pts[keep]
    return pts


def serialize_pcd(cloud):
    _require_points(cloud)
    n = len(cloud)
    head = (
        "# .PCD v0.7 - Point Cloud Data file format\n"
        "VERSION .7\n"
        "FIELDS x y z\n"
        "SIZE 4 4 4\n"
        "TYPE F F F\n"
        "COUNT 1 1 1\n"
        f"WIDTH {n}\n"
        "HEIGHT 1\n"
        "VIEWPOINT 0 0 0 1 0 0 0\n"
        f"POINTS {n}\n"
        "DATA ascii\n"
    )
    # repr() is the shortest string that round-trips a float64
    body = "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in cloud.points.tolist())
    return head + body


def parse_xyz(stream):
    """Plain whitespace-separated ``x y z`` rows; extra columns are ignored."""
    rows = []
    for lineno, raw in enumerate(_as_lines(stream), start=1):
        tokens = raw.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        if len(tokens) < 3:
            raise BadRow(f"expected at least 3 values, got {len(tokens)}", lineno)
        try:
            rows.append([float(t) for t in tokens[:3]])
        except ValueError:
            raise BadRow(f"non-numeric value in {raw.strip()!r}", lineno) from None
    pts = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return PointCloud(_drop_non_finite(pts))


def read_cloud(path):
    path = Path(path)
    with open(path, encoding="ascii", errors="strict") as fh:
        if path.suffix.lower() == ".xyz":
            cloud = parse_xyz(fh)
        else:
            cloud = parse_pcd(fh)
    return PointCloud(cloud.points, frame_label=path.stem)


def write_cloud(cloud, path):
    Path(path).write_text(serialize_pcd(cloud), encoding="ascii")


def bounding_box(cloud):
    _require_points(cloud)
    return cloud.points.min(axis=0), cloud.points.max(axis=0)

