"""Command-line interface.

    regbench synth    --seed 7 --out data/synthetic
    regbench generate data/synthetic/sequence.ini --regime local
    regbench run      data/synthetic/synthetic.txt results.csv --algorithm icp --jobs 4
    regbench score    results.csv --out report/
    regbench gteval   data/synthetic/sequence.ini --out gt.csv
    regbench fetch    manifest.ini data/

Exit codes: 0 success, 1 partial failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import bench
from .datasets import cmd_fetch
from .errors import RegBenchError
from .registration import RegistrarConfig
from .synth import SynthConfig, cmd_synth

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


def _registrar_flags(p):
    p.add_argument("--algorithm", choices=["icp", "gicp"], default="icp")
    p.add_argument("--leaf", type=float, default=0.1, help="voxel leaf size [m]")
    p.add_argument("--max-iters", type=int, default=30)
    p.add_argument("--outlier-factor", type=float, default=3.0, help="x median association distance")
    p.add_argument("--max-corr-dist", type=float, default=None, help="[m], unlimited by default")
    p.add_argument("--convergence-eps", type=float, default=1e-6)
    p.add_argument("--gicp-k", type=int, default=20)
    p.add_argument("--gicp-epsilon", type=float, default=1e-3)


def _config(args):
    return RegistrarConfig(
        algorithm=args.algorithm,
        voxel_leaf=args.leaf,
        max_iterations=args.max_iters,
        outlier_factor=args.outlier_factor,
        max_corr_distance=args.max_corr_dist,
        convergence_eps=args.convergence_eps,
        gicp_k_neighbors=args.gicp_k,
        gicp_cov_epsilon=args.gicp_epsilon,
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="regbench", description="Point-cloud registration benchmark")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download and convert datasets listed in a manifest")
    p.add_argument("manifest")
    p.add_argument("out_dir")

    p = sub.add_parser("synth", help="write a synthetic sequence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--scans", type=int, default=12)
    p.add_argument("--noise", type=float, default=0.0, help="per-point Gaussian noise sigma [m]")
    p.add_argument("--name", default="synthetic")

    p = sub.add_parser("generate", help="select pairs and sample initial perturbations")
    p.add_argument("spec", help="sequence.ini")
    p.add_argument("--regime", choices=["local", "global"], default="local")
    p.add_argument("--out", default=None, help="directory for the problem file (default: next to the spec)")
    p.add_argument("--per-pair", type=int, default=30)

    p = sub.add_parser("run", help="solve the problems of a problem file")
    p.add_argument("problem_file")
    p.add_argument("results_csv")
    p.add_argument("--clouds-dir", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--limit", type=int, default=None, help="stop after this many new problems")
    p.add_argument("--seed", type=int, default=0, help="accepted for reproducible scripts; registrars are deterministic")
    p.add_argument("--regime", choices=["local", "global"], default=None, help="only check the file's regime")
    _registrar_flags(p)

    p = sub.add_parser("score", help="aggregate a results file")
    p.add_argument("results_csv")
    p.add_argument("--out", default=None)
    p.add_argument("--bins", type=int, default=20)

    p = sub.add_parser("gteval", help="estimate ground-truth accuracy of a sequence")
    p.add_argument("spec")
    p.add_argument("--problems", default=None, help="take pairs from this problem file")
    p.add_argument("--algorithm", choices=["icp", "gicp"], default="gicp")
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except (RegBenchError, FileNotFoundError, KeyError) as err:
        print(f"regbench: error: {err}", file=sys.stderr)
        return EXIT_USAGE


def _dispatch(args):
    if args.command == "fetch":
        report = cmd_fetch(args.manifest, args.out_dir)
        for name in report.converted:
            print(f"{name}: converted {report.converted[name]}, up to date {report.skipped[name]}")
        for name, errs in report.errors.items():
            for e in errs:
                print(f"{name}: {e}", file=sys.stderr)
        return report.exit_code

    if args.command == "synth":
        spec = cmd_synth(args.seed, args.out, SynthConfig(n_scans=args.scans, noise=args.noise), args.name)
        print(spec.root / "sequence.ini")
        return EXIT_OK

    if args.command == "generate":
        print(bench.cmd_generate(args.spec, args.regime, args.out, args.per_pair))
        return EXIT_OK

    if args.command == "run":
        try:
            config = _config(args)
        except ValueError as err:
            print(f"regbench: error: {err}", file=sys.stderr)
            return EXIT_USAGE
        if args.regime is not None:
            from .problems import read_problem_file

            found = read_problem_file(args.problem_file).regime
            if found != args.regime:
                print(f"regbench: error: {args.problem_file} holds {found} problems", file=sys.stderr)
                return EXIT_USAGE
        solved, errors = bench.cmd_run(
            args.problem_file, args.results_csv, config, args.clouds_dir, args.jobs, args.limit
        )
        print(f"solved {solved} problem(s), {len(errors)} error(s)")
        return EXIT_PARTIAL if errors else EXIT_OK

    if args.command == "score":
        table = bench.cmd_score(args.results_csv, args.out, args.bins)
        print(table.as_text())
        return EXIT_OK

    if args.command == "gteval":
        report = bench.cmd_gteval(args.spec, args.problems, args.algorithm, args.out, args.jobs)
        print(
            f"pairs {len(report.residuals)}  outliers {report.n_outliers}  failed {len(report.failed)}\n"
            f"mean {report.mean:.6f} m  std {report.std_dev:.6f} m"
        )
        return EXIT_PARTIAL if report.failed else EXIT_OK
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
