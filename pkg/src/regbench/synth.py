"""Desk-scale synthetic sequences: a walled room with boxes and clutter,
observed by scans taken along a loop.

Every scan is a subset of one shared set of world points (plus optional
per-scan noise), so with zero noise overlapping scans contain bit-identical
points and the ground truth is exact. World points are kept at least
``min_spacing`` apart; with the default 0.3 m spacing a 0.1 m voxel grid
never merges two points and an overlap threshold below the spacing only
pairs a point with its own copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import PointCloud, write_cloud
from .problems import SequenceSpec, write_sequence_spec
from .transform import PerturbationBounds


@dataclass(frozen=True)
class SynthConfig:
    n_scans: int = 12
    room: tuple = (24.0, 16.0, 3.0)
    min_spacing: float = 0.3
    scan_range: float = 7.0
    loop_radii: tuple = (7.0, 4.0)
    n_boxes: int = 6
    n_clusters: int = 8
    noise: float = 0.0
    overlap_threshold: float = 0.25
    local_trans: tuple = (0.0, 1.0)
    global_trans: tuple = (2.0, 5.0)


def _rect(rng, origin, u, v, density):
    """Uniform samples on the parallelogram origin + a u + b v."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    area = np.linalg.norm(np.cross(u, v))
    n = max(1, int(rng.poisson(area * density)))
    ab = rng.uniform(0.0, 1.0, (n, 2))
    return np.asarray(origin, float) + ab[:, :1] * u + ab[:, 1:] * v


def _box(rng, lo, size, density):
    x, y, z = size
    ex, ey, ez = np.eye(3) * np.asarray(size)[:, None]
    lo = np.asarray(lo, float)
    faces = [
        (lo, ex, ey),
        (lo + ez, ex, ey),
        (lo, ex, ez),
        (lo + ey, ex, ez),
        (lo, ey, ez),
        (lo + ex, ey, ez),
    ]
    return np.vstack([_rect(rng, o, u, v, density) for o, u, v in faces])


def _thin(points, spacing, rng):
    """Greedy Poisson-disk thinning: keep a point only if no kept point is
    within ``spacing``. Visit order is a seeded shuffle."""
    order = rng.permutation(len(points))
    cell = spacing
    grid = {}
    kept = []
    s2 = spacing * spacing
    for i in order:
        p = points[i]
        key = tuple(np.floor(p / cell).astype(int))
        ok = True
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for q in grid.get((key[0] + dx, key[1] + dy, key[2] + dz), ()):
                        d = p - q
                        if d @ d < s2:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    break
        if ok:
            grid.setdefault(key, []).append(p)
            kept.append(i)
    kept.sort()
    return points[kept]


def make_world(rng, config=SynthConfig()):
    lx, ly, lz = config.room
    density = 3.0 / config.min_spacing**2
    parts = [
        _rect(rng, (0, 0, 0), (lx, 0, 0), (0, ly, 0), density),
        _rect(rng, (0, 0, 0), (lx, 0, 0), (0, 0, lz), density),
        _rect(rng, (0, ly, 0), (lx, 0, 0), (0, 0, lz), density),
        _rect(rng, (0, 0, 0), (0, ly, 0), (0, 0, lz), density),
        _rect(rng, (lx, 0, 0), (0, ly, 0), (0, 0, lz), density),
    ]
    for _ in range(config.n_boxes):
        size = rng.uniform([0.6, 0.6, 0.5], [2.5, 2.5, 2.2])
        lo = rng.uniform([1.0, 1.0, 0.0], [lx - 1.0 - size[0], ly - 1.0 - size[1], 0.0])
        parts.append(_box(rng, lo, size, density))
    for _ in range(config.n_clusters):
        center = rng.uniform([1.0, 1.0, 0.3], [lx - 1.0, ly - 1.0, 2.0])
        parts.append(center + rng.normal(scale=0.35, size=(int(rng.integers(40, 120)), 3)))
    pts = np.vstack(parts)
    inside = np.all((pts >= [0, 0, 0]) & (pts <= [lx, ly, lz]), axis=1)
    return _thin(pts[inside], config.min_spacing, rng)


def scan_positions(rng, config=SynthConfig()):
    lx, ly, _ = config.room
    ax, ay = config.loop_radii
    k = np.arange(config.n_scans)
    phase = 2.0 * math.pi * k / config.n_scans + rng.uniform(-0.1, 0.1, config.n_scans)
    xy = np.c_[lx / 2 + ax * np.cos(phase), ly / 2 + ay * np.sin(phase)]
    xy += rng.uniform(-0.3, 0.3, xy.shape)
    return np.c_[xy, np.full(config.n_scans, 1.2)]


def make_scans(world, positions, config, rng):
    scans = []
    for pos in positions:
        sel = np.linalg.norm(world[:, :2] - pos[:2], axis=1) <= config.scan_range
        pts = world[sel]
        if config.noise > 0:
            pts = pts + rng.normal(scale=config.noise, size=pts.shape)
        scans.append(pts)
    return scans


def cmd_synth(seed, out_dir, config=SynthConfig(), name="synthetic"):
    """Write a synthetic sequence (ASCII PCD scans + sequence.ini) to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([int(seed), 0x5717])
    world = make_world(rng, config)
    positions = scan_positions(rng, config)
    scans = make_scans(world, positions, config, rng)
    names = []
    for i, pts in enumerate(scans):
        fname = f"scan_{i:03d}.pcd"
        write_cloud(PointCloud(pts), out / fname)
        names.append(fname)
    spec = SequenceSpec(
        name=name,
        clouds=names,
        overlap_threshold=config.overlap_threshold,
        bounds_local=PerturbationBounds.local(*config.local_trans),
        bounds_global=PerturbationBounds.global_(*config.global_trans),
        seed=int(seed),
        root=out,
    )
    write_sequence_spec(spec, out / "sequence.ini")
    return spec
