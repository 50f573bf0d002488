"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line."""

import csv
import math
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation
from scipy.stats import kstest

from regbench import bench
from regbench.cloud import PointCloud, diameter
from regbench.gteval import evaluate_ground_truth
from regbench.metrics import benchmark_metric, overlap, unnormalized_metric
from regbench.problems import MIN_OVERLAP, bin_counts, build_problem_set, compute_pairwise_overlaps, select_sequence_pairs
from regbench.registration import RegistrarConfig, gicp, gicp_cost, gicp_gradient, icp, svd_rigid_align
from regbench.spatial import KdIndex
from regbench.stats import ResultRecord, aggregate, quantile, score_row, spearman
from regbench.synth import SynthConfig, cmd_synth
from regbench.transform import (
    PerturbationBounds,
    RigidTransform,
    apply,
    axis_angle_matrix,
    sample_perturbation,
    sample_unit_axis,
)
from support import box_assembly, four_point_cloud, line_cloud, random_transform, rigid_gt_noise, wedge_pair
from support import wedge_surface_distance

I = RigidTransform.identity()
# 36 scans is the smallest loop that stocks every overlap bin with 10 pairs
WORLD = SynthConfig(n_scans=36)
WORLD_SEED = 0


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    spec = cmd_synth(WORLD_SEED, tmp_path_factory.mktemp("world"), WORLD)
    return spec, spec.load_clouds()


def random_cloud(rng):
    n = int(rng.integers(3, 200))
    return PointCloud(rng.normal(scale=rng.uniform(0.1, 20), size=(n, 3)))


@pytest.mark.acceptance("metric axioms")
def test_metric_axioms(note):
    rng = np.random.default_rng(100)
    worst_sym = worst_tri = worst_zero = 0.0
    start = time.perf_counter()
    for _ in range(1000):
        c = random_cloud(rng)
        a, b, m = random_transform(rng), random_transform(rng), random_transform(rng)
        ab = benchmark_metric(c, a, b).delta
        ba = benchmark_metric(c, b, a).delta
        assert ab > 1e-12
        worst_sym = max(worst_sym, abs(ab - ba) / ab)
        aa = benchmark_metric(c, a, RigidTransform(a.rotation.copy(), a.translation.copy())).delta
        worst_zero = max(worst_zero, aa)
        am = benchmark_metric(c, a, m).delta
        mb = benchmark_metric(c, m, b).delta
        worst_tri = max(worst_tri, ab - (am + mb))
    elapsed = time.perf_counter() - start
    note(f"sym {worst_sym:.1e}, self {worst_zero:.1e}, triangle excess {worst_tri:.1e}, {elapsed:.1f} s")
    assert worst_sym <= 1e-9
    assert worst_zero <= 1e-12
    assert worst_tri <= 1e-9
    assert elapsed < 10.0


@pytest.mark.acceptance("scale invariance")
def test_scale_invariance(note):
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        c = random_cloud(rng)
        a, b = random_transform(rng), random_transform(rng)
        d = benchmark_metric(c, a, b).delta
        for s in (0.1, 10.0):
            cs = PointCloud(c.points * s)
            as_ = RigidTransform(a.rotation, a.translation * s)
            bs = RigidTransform(b.rotation, b.translation * s)
            worst = max(worst, abs(benchmark_metric(cs, as_, bs).delta - d) / d)
    note(f"max relative change {worst:.1e}")
    assert worst <= 1e-9


@pytest.mark.acceptance("hand values")
def test_hand_values(note):
    c = four_point_cloud()
    shift = benchmark_metric(c, RigidTransform(np.eye(3), [0.1, 0, 0]), I).delta
    quarter = benchmark_metric(c, RigidTransform(axis_angle_matrix([0, 0, 1], math.pi / 2), np.zeros(3)), I).delta
    note(f"{shift!r}, {quarter!r}")
    assert abs(shift - 0.1) <= 1e-12
    assert abs(quarter - math.sqrt(2)) <= 1e-12


def brute_nearest(points, queries, chunk=500):
    ids = np.empty(len(queries), dtype=int)
    dists = np.empty(len(queries))
    for s in range(0, len(queries), chunk):
        q = queries[s : s + chunk]
        d = np.sqrt(((q[:, None, :] - points[None, :, :]) ** 2).sum(-1))
        ids[s : s + chunk] = d.argmin(axis=1)  # argmin returns the first, i.e. lowest, id on ties
        dists[s : s + chunk] = d[np.arange(len(q)), ids[s : s + chunk]]
    return ids, dists


@pytest.mark.acceptance("overlap oracle")
def test_overlap_oracle(note):
    for k in range(10):
        assert overlap(line_cloud(0), line_cloud(k), 0.5).fraction == (10 - k) / 10
    rng = np.random.default_rng(102)
    mismatches = 0
    for suite in range(3):
        pts = rng.uniform(0, 20, (10_000, 3))
        queries = rng.uniform(-1, 21, (10_000, 3))
        idx = KdIndex(pts)
        ids, dists = idx.nearest_many(queries)
        bid, bd = brute_nearest(pts, queries)
        mismatches += np.count_nonzero(ids != bid) + np.count_nonzero(dists != bd)
        r = 0.35
        got = idx.has_within_many(queries, r)
        mismatches += np.count_nonzero(got != (bd < r))
        frac = overlap(PointCloud(queries), PointCloud(pts), r).fraction
        mismatches += frac != np.count_nonzero(bd < r) / len(queries)
    note(f"{mismatches} mismatches over 3 suites of 10^4 points")
    assert mismatches == 0


@pytest.mark.acceptance("problem generation")
def test_problem_generation(world, note):
    spec, clouds = world
    floor = MIN_OVERLAP["local"]
    eligible = [e for e in compute_pairwise_overlaps(spec, clouds) if e[0] < e[1] and e[2] >= floor]
    top = max(e[2] for e in eligible)
    stocked = bin_counts(eligible, floor, top)
    assert min(stocked) >= 10, stocked
    pairs = select_sequence_pairs(spec, "local", clouds)
    counts = bin_counts(pairs, floor, top)
    problems = build_problem_set(spec, "local", clouds=clouds)
    bounds = spec.bounds("local")
    angles = Rotation.from_matrix(np.stack([p.initial_transform.rotation for p in problems])).magnitude()
    ks = kstest(angles, "uniform", args=(bounds.rot_min, bounds.rot_max - bounds.rot_min)).statistic
    note(f"bins {counts}, {len(problems)} problems, KS {ks:.4f}")
    assert counts == [10] * 10
    assert len(problems) == 3000
    assert ks < 0.035


@pytest.mark.acceptance("registration sanity")
def test_registration_sanity(note):
    rng = np.random.default_rng(103)
    worst_svd = 0.0
    for _ in range(200):
        a = rng.normal(scale=3, size=(int(rng.integers(3, 60)), 3))
        t = random_transform(rng, max_trans=50)
        est = svd_rigid_align(a, t.transform_points(a))
        worst_svd = max(worst_svd, np.abs(est.rotation - t.rotation).max(), np.abs(est.translation - t.translation).max())

    # full overlap: the source is the target, misplaced by at most 5 deg / 0.2 diameters
    cloud = box_assembly()
    bounds = PerturbationBounds(0.0, math.radians(5), 0.0, 0.2 * diameter(cloud))
    pivot = cloud.points.mean(axis=0)
    config = RegistrarConfig(algorithm="icp", voxel_leaf=0.1, outlier_factor=3.0, max_iterations=30)
    good = 0
    for seed in range(100):
        init = sample_perturbation(bounds, pivot, np.random.default_rng(seed))
        res = icp(apply(init, cloud), cloud, I, config)
        good += benchmark_metric(cloud, res.estimated @ init, I).delta < 0.01

    worst_grad = 0.0
    for seed in range(10):
        r = np.random.default_rng(seed)
        n = 60
        moved = r.normal(size=(n, 3))
        target = moved + r.normal(scale=0.3, size=(n, 3))
        m = r.normal(size=(n, 3, 3))
        weights = np.linalg.inv(m @ m.transpose(0, 2, 1) + 0.1 * np.eye(3))
        xi = np.r_[r.normal(scale=0.5, size=3), r.normal(size=3)]
        g = gicp_gradient(xi, moved, target, weights)
        fd = np.array([
            (gicp_cost(xi + e, moved, target, weights) - gicp_cost(xi - e, moved, target, weights)) / 2e-6
            for e in np.eye(6) * 1e-6
        ])
        worst_grad = max(worst_grad, np.linalg.norm(g - fd) / np.linalg.norm(fd))

    src, tgt, init = wedge_pair(0)
    ri, rg = icp(src, tgt, init), gicp(src, tgt, init)
    surf_i = wedge_surface_distance(ri.estimated.transform_points(src.points))
    surf_g = wedge_surface_distance(rg.estimated.transform_points(src.points))
    note(
        f"svd {worst_svd:.1e}, icp {good}/100, grad rel {worst_grad:.1e}, "
        f"two planes residual gicp {rg.residual:.4f} vs icp {ri.residual:.4f}"
    )
    assert worst_svd <= 1e-9
    assert good >= 95
    assert worst_grad <= 1e-4
    assert rg.status != "failed" and rg.residual <= ri.residual
    assert surf_g <= surf_i


@pytest.mark.acceptance("ground-truth evaluation")
def test_gt_eval(world, note):
    spec, clouds = world
    pairs = select_sequence_pairs(spec, "local", clouds)
    picked = [pairs[k] for k in np.random.default_rng(2024).choice(len(pairs), 22, replace=False)]
    corrupt = (5, 17)

    def audit(planted):
        rng = np.random.default_rng(1)
        items, injected = [], []
        for k, (i, j, _) in enumerate(picked):
            if k in planted:
                error = RigidTransform(np.eye(3), sample_unit_axis(rng))  # 1 m off
            else:
                error = rigid_gt_noise(clouds[i], rng, sigma_trans=0.05, max_rot_deg=1.0)
            injected.append(unnormalized_metric(clouds[i], error, I).delta)
            items.append((k, apply(error, clouds[i]), clouds[j]))
        return evaluate_ground_truth(items, radius=spec.overlap_threshold), np.array(injected)

    noisy, injected = audit(())
    truth = injected.mean()
    rel = abs(noisy.mean - truth) / truth
    planted, _ = audit(corrupt)
    flagged = [pid for pid, f in zip(planted.pair_ids, planted.outliers) if f]
    note(f"mean {noisy.mean:.4f} m vs injected {truth:.4f} m ({rel:.1%}), flagged {flagged}")
    assert not noisy.failed and not planted.failed
    assert rel <= 0.30
    assert flagged == list(corrupt)


@pytest.mark.acceptance("statistics")
def test_statistics(note):
    q = quantile(np.arange(1, 101), 0.95)
    assert abs(q - 95.05) <= 1e-12
    rng = np.random.default_rng(104)
    x = rng.normal(size=200)
    assert spearman(x, np.exp(x)) == 1.0 and spearman(x, -x**3) == -1.0

    # ties: average ranks then Pearson, done by hand
    a = np.array([1.0, 2, 2, 3, 5, 5, 5, 8])
    b = np.array([2.0, 1, 4, 4, 3, 9, 9, 7])

    def avg_ranks(v):
        order = sorted(range(len(v)), key=lambda k: v[k])
        r = [0.0] * len(v)
        s = 0
        while s < len(v):
            e = s
            while e + 1 < len(v) and v[order[e + 1]] == v[order[s]]:
                e += 1
            for k in range(s, e + 1):
                r[order[k]] = (s + e) / 2 + 1
            s = e + 1
        return np.array(r)

    ra, rb = avg_ranks(a), avg_ranks(b)
    oracle = float(np.corrcoef(ra, rb)[0, 1])
    tied = spearman(a, b)
    assert abs(tied - oracle) <= 1e-12

    records = [
        ResultRecord(k, f"seq{k % 3}", "local", 0.5, 1.0, float(v), "converged", 5, 0.0, [0.0] * 12)
        for k, v in enumerate(rng.lognormal(size=90))
    ]
    total = aggregate(records).total
    direct = score_row("total", [r.final_delta for r in records])
    values = np.array([r.final_delta for r in records])
    assert total == direct
    assert total.mean == pytest.approx(values.mean(), rel=1e-12)
    for got, p in zip((total.median, total.q75, total.q95), (0.5, 0.75, 0.95)):
        assert got == pytest.approx(np.quantile(values, p), rel=1e-12)
    note(f"quantile {q!r}, tied spearman {tied:.6f} vs {oracle:.6f}")


def rows_without_wall_time(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    col = rows[0].index("wall_time_s")
    return [r[:col] + r[col + 1 :] for r in rows]


def pipeline(root):
    spec = cmd_synth(WORLD_SEED, root / "seq", WORLD)
    problems = bench.cmd_generate(spec.root / "sequence.ini", "local")
    results = root / "results.csv"
    solved, errors = bench.cmd_run(problems, results, RegistrarConfig(algorithm="icp"))
    table = bench.cmd_score(results, root / "scores", algorithm="icp")
    return results, solved, errors, table


@pytest.mark.slow
@pytest.mark.acceptance("end-to-end")
def test_end_to_end(tmp_path, note):
    start = time.perf_counter()
    results, solved, errors, table = pipeline(tmp_path / "a")
    elapsed = time.perf_counter() - start
    rerun, *_ = pipeline(tmp_path / "b")
    same = rows_without_wall_time(results) == rows_without_wall_time(rerun)
    note(f"{solved} problems in {elapsed / 60:.1f} min, median {table.total.median:.4f}, rerun identical {same}")
    assert not errors
    assert solved == 3000
    assert elapsed < 15 * 60
    assert same
