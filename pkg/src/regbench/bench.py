"""End-to-end benchmark protocol: generate problems, run a registrar, score."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .cloud import read_cloud
from .gteval import default_registrar, evaluate_ground_truth
from .metrics import benchmark_metric
from .problems import (
    build_problem_set,
    problem_file_name,
    read_problem_file,
    read_sequence_spec,
    select_sequence_pairs,
    write_problem_file,
)
from .registration import RegistrarConfig, register
from .stats import (
    RESULT_FIELDS,
    ResultRecord,
    aggregate,
    correlation_table,
    format_correlations,
    histogram,
    read_results,
)
from .transform import RigidTransform, apply, to_row_major12

log = logging.getLogger(__name__)


def cmd_generate(spec_path, regime="local", out_dir=None, per_pair=30):
    spec = read_sequence_spec(spec_path)
    problem_set = build_problem_set(spec, regime, per_pair=per_pair)
    out_dir = Path(out_dir) if out_dir is not None else spec.root
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / problem_file_name(spec.name, regime)
    write_problem_file(problem_set, path)
    return path


# ------------------------------------------------------------------ run

_worker = {}


def _init_worker(clouds_dir, config):
    _worker.clear()
    _worker.update(dir=Path(clouds_dir), config=config, clouds={})


def _cloud(name):
    cache = _worker["clouds"]
    if name not in cache:
        cache[name] = read_cloud(_worker["dir"] / name)
    return cache[name]


def solve_problem(problem, sequence):
    """Steps 3-5: misplace the source, register it back, score the outcome.

    Clouds are stored at ground truth, so the ground-truth pose is the
    identity and the pose to score is (registrar estimate) o (initial).
    """
    identity = RigidTransform.identity()
    source = _cloud(problem.source)
    target = _cloud(problem.target)
    initial = problem.initial_transform
    result = register(apply(initial, source), target, identity, _worker["config"])
    # a failed result carries the identity estimate, i.e. the unimproved initial pose
    final_pose = result.estimated @ initial
    return ResultRecord(
        problem_id=problem.id,
        sequence=sequence,
        regime=problem.regime,
        overlap=problem.overlap,
        initial_delta=benchmark_metric(source, initial, identity).delta,
        final_delta=benchmark_metric(source, final_pose, identity).delta,
        status=result.status,
        iterations=result.iterations,
        wall_time_s=result.wall_time,
        estimated=to_row_major12(result.estimated),
    )


def _solve_safe(args):
    problem, sequence = args
    try:
        return solve_problem(problem, sequence), None
    except Exception as err:  # one bad problem must not sink the run
        return None, f"problem {problem.id}: {type(err).__name__}: {err}"


def _completed_ids(path):
    """Ids already in a results file; a torn final row is cut off."""
    path = Path(path)
    if not path.exists() or path.stat().st_size == 0:
        return None
    data = path.read_bytes()
    if not data.endswith(b"\n"):
        data = data[: data.rfind(b"\n") + 1]
        path.write_bytes(data)
    ids = set()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ids.add(int(row["problem_id"]))
    return ids


def cmd_run(problem_file, results_csv, config=None, clouds_dir=None, jobs=1, limit=None):
    """Solve every problem not yet present in ``results_csv``.

    Returns (number solved now, list of error strings).
    """
    config = config or RegistrarConfig()
    problem_set = read_problem_file(problem_file)
    clouds_dir = Path(clouds_dir) if clouds_dir is not None else Path(problem_file).parent
    done = _completed_ids(results_csv)
    fresh = done is None
    done = done or set()
    pending = [p for p in problem_set.problems if p.id not in done]
    if limit is not None:
        pending = pending[:limit]
    work = [(p, problem_set.sequence) for p in pending]
    errors = []
    solved = 0
    with open(results_csv, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(RESULT_FIELDS)
            fh.flush()
        if jobs > 1:
            pool = ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(clouds_dir, config))
            outcomes = pool.map(_solve_safe, work, chunksize=8)
        else:
            pool = None
            _init_worker(clouds_dir, config)
            outcomes = map(_solve_safe, work)
        try:
            for record, err in outcomes:
                if err:
                    errors.append(err)
                    log.error(err)
                    continue
                writer.writerow(record.row())
                fh.flush()
                solved += 1
        finally:
            if pool is not None:
                pool.shutdown()
    return solved, errors


# ------------------------------------------------------------------ score


def cmd_score(results_csv, out_dir=None, n_bins=20, algorithm=""):
    records = read_results(results_csv)
    table = aggregate(records)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        table.write_csv(out / "scores.csv")
        corr = correlation_table(records)
        with open(out / "correlations.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sequence", "corr_initial_misalignment", "corr_overlap", "strong_initial", "strong_overlap"])
            for r in corr:
                w.writerow([r.sequence, repr(r.vs_initial), repr(r.vs_overlap), *map(int, r.strong)])
        (out / "correlations.txt").write_text(format_correlations(corr, algorithm) + "\n")
        (out / "scores.txt").write_text(table.as_text() + "\n")
        for column in ("final_delta", "overlap", "initial_delta"):
            edges, counts = histogram([getattr(r, column) for r in records], n_bins)
            with open(out / f"hist_{column}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["bin_lo", "bin_hi", "count"])
                for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                    w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
    return table


# ------------------------------------------------------------------ gteval


def cmd_gteval(spec_path, problem_file=None, algorithm="gicp", out_csv=None, jobs=1):
    """Audit ground truth on the benchmark's selected pairs.

    Pairs come from ``problem_file`` when given, otherwise they are selected
    afresh with the local-regime rules.
    """
    spec = read_sequence_spec(spec_path)
    clouds = dict(zip(spec.clouds, spec.load_clouds()))
    if problem_file is not None:
        seen = {}
        for p in read_problem_file(problem_file):
            seen.setdefault((p.source, p.target), len(seen))
        names = list(seen)
    else:
        pairs = select_sequence_pairs(spec, "local", [clouds[n] for n in spec.clouds])
        names = [(spec.clouds[i], spec.clouds[j]) for i, j, _ in pairs]
    items = [(f"{s}->{t}", clouds[s], clouds[t]) for s, t in names]
    registrar = default_registrar(spec.overlap_threshold, algorithm)
    report = evaluate_ground_truth(items, registrar, jobs=jobs)
    if out_csv is not None:
        report.write_csv(out_csv)
    return report

