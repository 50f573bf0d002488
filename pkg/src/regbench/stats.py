"""Score tables, quantiles, Spearman correlations and histograms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyInput, LengthMismatch, ZeroVariance

QUANTILES = (0.5, 0.75, 0.95)
STRONG_CORRELATION = 0.5

RESULT_FIELDS = [
    "problem_id",
    "sequence",
    "regime",
    "overlap",
    "initial_delta",
    "final_delta",
    "status",
    "iterations",
    "wall_time_s",
] + [f"t{i}" for i in range(1, 13)]


def quantile(values, q):
    """Linear interpolation between order statistics at rank 1 + (n - 1) q."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise EmptyInput("quantile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    return float(np.quantile(v, q, method="linear"))


def spearman(x, y):
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 3:
        raise ValueError("need at least 3 observations")
    rx = rankdata(x) - (x.size + 1) / 2.0
    ry = rankdata(y) - (y.size + 1) / 2.0
    sx = math.sqrt(float(rx @ rx))
    sy = math.sqrt(float(ry @ ry))
    if sx == 0.0 or sy == 0.0:
        raise ZeroVariance("one input has all-equal ranks")
    return max(-1.0, min(1.0, float(rx @ ry) / (sx * sy)))


def histogram(values, n_bins):
    """Equal-width bins over [min, max]; the last bin is closed."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise EmptyInput("histogram of an empty sample")
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    counts, edges = np.histogram(v, bins=n_bins)
    return edges, counts


@dataclass
class ResultRecord:
    problem_id: int
    sequence: str
    regime: str
    overlap: float
    initial_delta: float
    final_delta: float
    status: str
    iterations: int = 0
    wall_time_s: float = 0.0
    estimated: list = field(default_factory=list)

    def row(self):
        return [
            self.problem_id,
            self.sequence,
            self.regime,
            repr(float(self.overlap)),
            repr(float(self.initial_delta)),
            repr(float(self.final_delta)),
            self.status,
            self.iterations,
            f"{self.wall_time_s:.6f}",
        ] + [repr(float(v)) for v in self.estimated]


@dataclass
class ScoreRow:
    name: str
    n: int
    median: float
    q75: float
    q95: float
    mean: float
    std: float


@dataclass
class ScoreTable:
    rows: list
    total: ScoreRow
    records: list

    def as_text(self):
        head = f"{'Sequence':<24}{'N':>6}{'Median':>10}{'0.75 Q':>10}{'0.95 Q':>10}{'Mean':>10}{'Std Dev':>10}"
        lines = [head, "-" * len(head)]
        for r in [*self.rows, self.total]:
            lines.append(
                f"{r.name:<24}{r.n:>6}{r.median:>10.4f}{r.q75:>10.4f}{r.q95:>10.4f}{r.mean:>10.4f}{r.std:>10.4f}"
            )
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sequence", "n", "median", "q75", "q95", "mean", "std"])
            for r in [*self.rows, self.total]:
                w.writerow([r.name, r.n, *(repr(float(v)) for v in (r.median, r.q75, r.q95, r.mean, r.std))])


def score_row(name, values):
    v = np.asarray(values, dtype=np.float64)
    return ScoreRow(
        name,
        int(v.size),
        quantile(v, 0.5),
        quantile(v, 0.75),
        quantile(v, 0.95),
        float(v.mean()),
        float(v.std(ddof=1)) if v.size > 1 else 0.0,
    )


def _by_sequence(records):
    groups = {}
    for r in records:
        groups.setdefault(r.sequence, []).append(r)
    return groups


def aggregate(records):
    """Per-sequence and pooled statistics of ``final_delta``."""
    records = list(records)
    if not records:
        raise EmptyInput("no results to aggregate")
    rows = [
        score_row(name, [r.final_delta for r in group])
        for name, group in _by_sequence(records).items()
    ]
    total = score_row("total", [r.final_delta for r in records])
    return ScoreTable(rows, total, records)


@dataclass
class CorrelationRow:
    sequence: str
    vs_initial: float
    vs_overlap: float

    @property
    def strong(self):
        return tuple(
            not math.isnan(c) and abs(c) >= STRONG_CORRELATION for c in (self.vs_initial, self.vs_overlap)
        )


def _safe_spearman(x, y):
    try:
        return spearman(x, y)
    except (ZeroVariance, ValueError):
        return float("nan")


def correlation_table(records):
    """Spearman correlation of final error with initial misalignment and overlap."""
    out = []
    for name, group in _by_sequence(records).items():
        err = [r.final_delta for r in group]
        out.append(
            CorrelationRow(
                name,
                _safe_spearman(err, [r.initial_delta for r in group]),
                _safe_spearman(err, [r.overlap for r in group]),
            )
        )
    return out


def format_correlations(rows, algorithm=""):
    head = f"{'Sequence':<24}{'Algorithm':<10}{'Corr. Initial':>15}{'Corr. Overlap':>15}"
    lines = [head, "-" * len(head)]
    for r in rows:
        marks = ["*" if s else " " for s in r.strong]
        lines.append(
            f"{r.sequence:<24}{algorithm:<10}{r.vs_initial:>14.3f}{marks[0]}{r.vs_overlap:>14.3f}{marks[1]}"
        )
    lines.append("(* |rho| >= 0.5)")
    return "\n".join(lines)


def read_results(path):
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                ResultRecord(
                    int(row["problem_id"]),
                    row["sequence"],
                    row["regime"],
                    float(row["overlap"]),
                    float(row["initial_delta"]),
                    float(row["final_delta"]),
                    row["status"],
                    int(row["iterations"]),
                    float(row["wall_time_s"]),
                    [float(row[f"t{i}"]) for i in range(1, 13)],
                )
            )
    return records
