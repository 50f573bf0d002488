"""Full benchmark on a synthetic sequence: both regimes, both registrars.

    python scripts/run_synthetic_benchmark.py --out runs/synth --scans 36 --jobs 4
"""

import argparse
import logging
import time
from pathlib import Path

from regbench import bench
from regbench.registration import RegistrarConfig
from regbench.synth import SynthConfig, cmd_synth


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/synth")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scans", type=int, default=36)
    ap.add_argument("--noise", type=float, default=0.0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--limit", type=int, default=None, help="problems per run, for quick looks")
    ap.add_argument("--regimes", nargs="+", default=["local", "global"])
    ap.add_argument("--algorithms", nargs="+", default=["icp", "gicp"])
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    out = Path(args.out)
    spec = cmd_synth(args.seed, out / "sequence", SynthConfig(n_scans=args.scans, noise=args.noise))
    for regime in args.regimes:
        problems = bench.cmd_generate(spec.root / "sequence.ini", regime)
        for algorithm in args.algorithms:
            tag = f"{regime}_{algorithm}"
            results = out / f"{tag}.csv"
            start = time.perf_counter()
            solved, errors = bench.cmd_run(
                problems, results, RegistrarConfig(algorithm=algorithm), jobs=args.jobs, limit=args.limit
            )
            took = time.perf_counter() - start
            table = bench.cmd_score(results, out / tag, algorithm=algorithm)
            print(f"\n== {tag}: {solved} new problems in {took:.0f} s, {len(errors)} errors")
            print(table.as_text())


if __name__ == "__main__":
    main()
