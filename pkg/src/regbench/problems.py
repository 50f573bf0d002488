"""Registration-problem generation and the problem-file format."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import centroid, read_cloud
from .errors import DuplicateId, MalformedRecord, NoEligiblePairs, NonPositiveThreshold
from .metrics import overlap
from .spatial import index_of
from .transform import (
    PerturbationBounds,
    RigidTransform,
    from_row_major12,
    problem_rng,
    sample_perturbation,
    to_row_major12,
)

MIN_OVERLAP = {"local": 0.40, "global": 0.60}
HEADER = "id source target overlap " + " ".join(f"t{i}" for i in range(1, 13))

# stream tags keep selection draws independent from perturbation draws
_SELECT_STREAM = 0x5E1EC7


@dataclass
class SequenceSpec:
    name: str
    clouds: list
    overlap_threshold: float
    bounds_local: PerturbationBounds
    bounds_global: PerturbationBounds
    seed: int = 0
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        if len(self.clouds) < 2:
            raise ValueError("a sequence needs at least two clouds")
        if not self.overlap_threshold > 0:
            raise NonPositiveThreshold("overlap threshold must be positive")
        self.root = Path(self.root)

    def bounds(self, regime):
        return self.bounds_local if regime == "local" else self.bounds_global

    def cloud_path(self, name):
        return self.root / name

    def load_clouds(self):
        return [read_cloud(self.cloud_path(name)) for name in self.clouds]


@dataclass(frozen=True)
class RegistrationProblem:
    id: int
    source: str
    target: str
    overlap: float
    initial_transform: RigidTransform
    regime: str = "local"


@dataclass
class ProblemSet:
    sequence: str
    regime: str
    problems: list

    def __len__(self):
        return len(self.problems)

    def __iter__(self):
        return iter(self.problems)


# ------------------------------------------------------------------ generation


def compute_pairwise_overlaps(spec, clouds=None):
    """Overlap of every ordered pair (i, j), i != j, with cloud i as source."""
    if clouds is None:
        clouds = spec.load_clouds()
    out = []
    for j, target in enumerate(clouds):
        index = index_of(target)
        for i, source in enumerate(clouds):
            if i != j:
                out.append((i, j, overlap(source, target, spec.overlap_threshold, index).fraction))
    out.sort(key=lambda e: (e[0], e[1]))
    return out


def _bin_of(value, lo, width, n_bins):
    if width == 0:
        return 0
    return min(int(math.floor((value - lo) / width)), n_bins - 1)


def select_pairs(overlaps, min_overlap, n_bins=10, per_bin=10, rng=None):
    """Pick pairs so that overlap levels are evenly represented.

    Pairs below ``min_overlap`` are discarded; [min_overlap, max observed] is
    split into ``n_bins`` equal intervals and ``per_bin`` pairs are drawn
    from each. Shortfalls of sparse intervals are drawn from all remaining
    eligible pairs. Only pairs with source index below target index take
    part, so every unordered cloud pair appears at most once.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    eligible = [e for e in overlaps if e[0] < e[1] and e[2] >= min_overlap]
    if not eligible:
        raise NoEligiblePairs(f"no pair reaches {min_overlap:.0%} overlap")
    top = max(e[2] for e in eligible)
    width = (top - min_overlap) / n_bins
    bins = [[] for _ in range(n_bins)]
    for k, e in enumerate(eligible):
        bins[_bin_of(e[2], min_overlap, width, n_bins)].append(k)

    chosen = []
    for members in bins:
        take = min(per_bin, len(members))
        if take:
            chosen.extend(rng.choice(members, size=take, replace=False).tolist())
    wanted = min(n_bins * per_bin, len(eligible))
    if len(chosen) < wanted:
        taken = set(chosen)
        pool = [k for k in range(len(eligible)) if k not in taken]
        chosen.extend(rng.choice(pool, size=wanted - len(chosen), replace=False).tolist())
    return [eligible[k] for k in sorted(chosen)]


def bin_counts(pairs, min_overlap, top, n_bins=10):
    width = (top - min_overlap) / n_bins
    counts = [0] * n_bins
    for e in pairs:
        counts[_bin_of(e[2], min_overlap, width, n_bins)] += 1
    return counts


def generate_problems(spec, regime, pairs, per_pair=30, clouds=None):
    bounds = spec.bounds(regime)
    floor = MIN_OVERLAP[regime]
    if any(ov < floor for _, _, ov in pairs):
        raise ValueError(f"{regime} problems need overlap >= {floor}")
    if clouds is None:
        clouds = spec.load_clouds()
    problems = []
    for pair_index, (i, j, ov) in enumerate(pairs):
        pivot = centroid(clouds[i])
        for k in range(per_pair):
            rng = problem_rng(spec.seed, pair_index, k)
            problems.append(
                RegistrationProblem(
                    id=len(problems),
                    source=spec.clouds[i],
                    target=spec.clouds[j],
                    overlap=float(ov),
                    initial_transform=sample_perturbation(bounds, pivot, rng),
                    regime=regime,
                )
            )
    return ProblemSet(spec.name, regime, problems)


def select_sequence_pairs(spec, regime, clouds, n_bins=10, per_bin=10):
    overlaps = compute_pairwise_overlaps(spec, clouds)
    rng = problem_rng(spec.seed, _SELECT_STREAM, 0 if regime == "local" else 1)
    return select_pairs(overlaps, MIN_OVERLAP[regime], n_bins, per_bin, rng)


def build_problem_set(spec, regime, n_bins=10, per_bin=10, per_pair=30, clouds=None):
    """Overlaps, pair selection and perturbations for one sequence and regime."""
    if clouds is None:
        clouds = spec.load_clouds()
    pairs = select_sequence_pairs(spec, regime, clouds, n_bins, per_bin)
    return generate_problems(spec, regime, pairs, per_pair, clouds)


# ------------------------------------------------------------------ file format


def problem_file_name(sequence, regime):
    return f"{sequence}_global.txt" if regime == "global" else f"{sequence}.txt"


def _fmt(x):
    """Shortest round-tripping text; integral values are written without ".0"."""
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def write_problem_file(problem_set, path):
    lines = [
        f"# sequence {problem_set.sequence}",
        f"# regime {problem_set.regime}",
        "# overlap: fraction of source points with a target point closer than the threshold",
        HEADER,
    ]
    for p in problem_set.problems:
        fields = [str(p.id), p.source, p.target, _fmt(p.overlap)]
        fields += [_fmt(v) for v in to_row_major12(p.initial_transform)]
        lines.append(" ".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_problem_file(path):
    path = Path(path)
    regime = "global" if path.stem.endswith("_global") else "local"
    sequence = path.stem[: -len("_global")] if regime == "global" else path.stem
    problems = []
    seen = set()
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(" ")
                if key == "sequence" and value:
                    sequence = value.strip()
                elif key == "regime" and value.strip() in MIN_OVERLAP:
                    regime = value.strip()
                continue
            if not header_seen:
                if line.split() != HEADER.split():
                    raise MalformedRecord(f"expected header {HEADER!r}", lineno)
                header_seen = True
                continue
            tokens = line.split()
            if len(tokens) != 16:
                raise MalformedRecord(f"expected 16 fields, got {len(tokens)}", lineno)
            try:
                pid = int(tokens[0])
                ov = float(tokens[3])
                values = [float(t) for t in tokens[4:]]
            except ValueError:
                raise MalformedRecord("non-numeric field", lineno) from None
            if not (0.0 <= ov <= 1.0):
                raise MalformedRecord(f"overlap {ov} outside [0, 1]", lineno)
            if pid in seen:
                raise DuplicateId(f"line {lineno}: duplicate problem id {pid}")
            seen.add(pid)
            problems.append(
                RegistrationProblem(
                    pid, tokens[1], tokens[2], ov, from_row_major12(values, line=lineno), regime
                )
            )
    if not header_seen:
        raise MalformedRecord("missing header line", None)
    return ProblemSet(sequence, regime, problems)


# ------------------------------------------------------------------ sequence file


def _bounds_section(cp, section, regime):
    s = cp[section]
    return PerturbationBounds(
        math.radians(s.getfloat("rot_min_deg")),
        math.radians(s.getfloat("rot_max_deg")),
        s.getfloat("trans_min"),
        s.getfloat("trans_max"),
        regime,
    )


def _write_bounds(b):
    return {
        "rot_min_deg": repr(math.degrees(b.rot_min)),
        "rot_max_deg": repr(math.degrees(b.rot_max)),
        "trans_min": repr(b.trans_min),
        "trans_max": repr(b.trans_max),
    }


def write_sequence_spec(spec, path):
    """Store a SequenceSpec as an INI file; cloud names are relative to it."""
    cp = configparser.ConfigParser()
    cp["sequence"] = {
        "name": spec.name,
        "overlap_threshold": repr(spec.overlap_threshold),
        "seed": str(spec.seed),
        "clouds": "\n".join(spec.clouds),
    }
    cp["local"] = _write_bounds(spec.bounds_local)
    cp["global"] = _write_bounds(spec.bounds_global)
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


def read_sequence_spec(path):
    path = Path(path)
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    s = cp["sequence"]
    return SequenceSpec(
        name=s.get("name"),
        clouds=[c.strip() for c in s.get("clouds").splitlines() if c.strip()],
        overlap_threshold=s.getfloat("overlap_threshold"),
        bounds_local=_bounds_section(cp, "local", "local"),
        bounds_global=_bounds_section(cp, "global", "global"),
        seed=s.getint("seed", 0),
        root=path.parent,
    )
