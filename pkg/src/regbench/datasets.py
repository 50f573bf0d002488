"""Manifest-driven dataset fetching and conversion to ASCII PCD.

A manifest is an INI file with one section per sequence::

    [apartment]
    source = https://example.org/apartment.zip     ; URL(s), a directory or a glob
    format = csv                                   ; pcd | xyz | csv
    overlap_threshold = 0.1
    local_trans = 0.0 1.0
    global_trans = 2.0 5.0
    ; optional
    local_rot_deg = 0 45
    global_rot_deg = 45 180
    seed = 0
    columns = x y z                                ; csv column names or 0-based indices
    merge_source = /data/right/*.pcd               ; second sensor, matched by sort order
    merge_extrinsic = 1 0 0 0  0 1 0 0  0 0 1 0    ; t1..t12 of the second sensor

Converted clouds land in ``out_dir/<sequence>/`` together with a
``sequence.ini`` usable by the ``generate`` and ``gteval`` commands.
"""

from __future__ import annotations

import configparser
import csv
import glob
import hashlib
import io
import json
import logging
import math
import shutil
import urllib.request
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import PointCloud, parse_pcd, parse_xyz, serialize_pcd
from .errors import BadRow, ManifestError
from .problems import SequenceSpec, write_sequence_spec
from .transform import PerturbationBounds, apply, from_row_major12

log = logging.getLogger(__name__)

FORMATS = ("pcd", "xyz", "csv")
LEDGER = ".fetch.json"


@dataclass
class ManifestEntry:
    name: str
    sources: list
    format: str
    overlap_threshold: float
    bounds_local: PerturbationBounds
    bounds_global: PerturbationBounds
    seed: int = 0
    columns: list = field(default_factory=list)
    merge_sources: list = field(default_factory=list)
    merge_extrinsic: object = None


def _pair(section, key, default=None):
    raw = section.get(key)
    if raw is None:
        if default is None:
            raise ManifestError(f"[{section.name}] missing {key}")
        return default
    try:
        lo, hi = (float(v) for v in raw.split())
    except ValueError:
        raise ManifestError(f"[{section.name}] {key} needs two numbers") from None
    return lo, hi


def read_manifest(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",))
    if not cp.read(path, encoding="utf-8"):
        raise ManifestError(f"cannot read manifest {path}")
    base = Path(path).parent
    entries = []
    for name in cp.sections():
        s = cp[name]
        fmt = s.get("format", "pcd").strip().lower()
        if fmt not in FORMATS:
            raise ManifestError(f"[{name}] unknown format {fmt!r}")
        try:
            threshold = s.getfloat("overlap_threshold")
        except ValueError:
            raise ManifestError(f"[{name}] overlap_threshold must be a number") from None
        if threshold is None or not threshold > 0:
            raise ManifestError(f"[{name}] overlap_threshold must be positive")
        lr = _pair(s, "local_rot_deg", (0.0, 45.0))
        gr = _pair(s, "global_rot_deg", (45.0, 180.0))
        try:
            bl = PerturbationBounds(math.radians(lr[0]), math.radians(lr[1]), *_pair(s, "local_trans"), "local")
            bg = PerturbationBounds(math.radians(gr[0]), math.radians(gr[1]), *_pair(s, "global_trans"), "global")
        except ValueError as err:
            raise ManifestError(f"[{name}] {err}") from None
        extr = None
        if s.get("merge_extrinsic"):
            extr = from_row_major12([float(v) for v in s.get("merge_extrinsic").split()])
        entries.append(
            ManifestEntry(
                name=name,
                sources=_split_sources(s.get("source", ""), base),
                format=fmt,
                overlap_threshold=threshold,
                bounds_local=bl,
                bounds_global=bg,
                seed=s.getint("seed", 0),
                columns=s.get("columns", "").split(),
                merge_sources=_split_sources(s.get("merge_source", ""), base),
                merge_extrinsic=extr,
            )
        )
    if not entries:
        raise ManifestError("manifest has no sequences")
    return entries


def _split_sources(raw, base):
    out = []
    for item in raw.split():
        if "://" in item or Path(item).is_absolute():
            out.append(item)
        else:
            out.append(str(base / item))
    return out


# ------------------------------------------------------------------ parsing


def parse_csv(stream, columns=()):
    """x, y, z from a CSV file, by header name, by index, or the first three columns."""
    rows = [r for r in csv.reader(stream) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        return PointCloud(np.empty((0, 3)))
    header = [h.strip().lower() for h in rows[0]]
    try:
        [float(v) for v in rows[0][:3]]
        has_header = False
    except ValueError:
        has_header = True
    if columns:
        idx = []
        for c in columns:
            if c.isdigit():
                idx.append(int(c))
            elif has_header and c.lower() in header:
                idx.append(header.index(c.lower()))
            else:
                raise ManifestError(f"column {c!r} not found")
    elif has_header and all(k in header for k in ("x", "y", "z")):
        idx = [header.index(k) for k in ("x", "y", "z")]
    else:
        idx = [0, 1, 2]
    body = rows[1:] if has_header else rows
    pts = np.empty((len(body), 3))
    for i, r in enumerate(body):
        try:
            pts[i] = [float(r[j]) for j in idx]
        except (ValueError, IndexError):
            raise BadRow(f"cannot read x y z from {r!r}", i + 1 + has_header) from None
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    return PointCloud(pts)


def load_any(path, fmt, columns=()):
    with open(path, encoding="ascii", errors="replace", newline="") as fh:
        if fmt == "pcd":
            return parse_pcd(fh)
        if fmt == "xyz":
            return parse_xyz(fh)
        return parse_csv(fh, columns)


# ------------------------------------------------------------------ fetching


def _download(url, dest_dir):
    dest_dir.mkdir(parents=True, exist_ok=True)
    target = dest_dir / Path(url.split("?")[0]).name
    if not target.exists():
        tmp = target.with_suffix(target.suffix + ".part")
        with urllib.request.urlopen(url, timeout=60) as resp, open(tmp, "wb") as fh:
            shutil.copyfileobj(resp, fh)
        tmp.rename(target)
    return target


def _expand(sources, fmt, work_dir):
    """Resolve URLs, archives, directories and globs into a sorted file list."""
    files = []
    for src in sources:
        if "://" in src:
            path = _download(src, work_dir / "_download")
        else:
            path = Path(src)
        if path.is_file() and path.suffix.lower() == ".zip":
            out = work_dir / "_download" / path.stem
            if not out.exists():
                with zipfile.ZipFile(path) as zf:
                    zf.extractall(out)
            path = out
        if path.is_dir():
            files += sorted(p for p in path.rglob(f"*.{fmt}") if p.is_file())
        elif path.is_file():
            files.append(path)
        else:
            matches = sorted(Path(p) for p in glob.glob(str(path)))
            if not matches:
                raise FileNotFoundError(f"no input matches {src}")
            files += matches
    return files


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class FetchReport:
    converted: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    failed_sequences: list = field(default_factory=list)

    @property
    def exit_code(self):
        return 1 if self.failed_sequences else 0


def cmd_fetch(manifest, out_dir):
    entries = read_manifest(manifest) if not isinstance(manifest, list) else manifest
    out_dir = Path(out_dir)
    report = FetchReport()
    for entry in entries:
        seq_dir = out_dir / entry.name
        seq_dir.mkdir(parents=True, exist_ok=True)
        ledger_path = seq_dir / LEDGER
        ledger = json.loads(ledger_path.read_text()) if ledger_path.exists() else {}
        converted = skipped = 0
        errors = []
        names = []
        try:
            files = _expand(entry.sources, entry.format, seq_dir)
            merge = _expand(entry.merge_sources, entry.format, seq_dir) if entry.merge_sources else []
        except Exception as err:  # network, archive and path errors all land here
            files, merge = [], []
            errors.append(f"{entry.sources}: {err}")
        if merge and len(merge) != len(files):
            errors.append(f"merge_source has {len(merge)} files, source has {len(files)}")
            files = []
        for k, f in enumerate(files):
            name = f"{Path(f).stem}.pcd"
            dest = seq_dir / name
            rec = ledger.get(name)
            if (
                rec
                and dest.exists()
                and dest.stat().st_size == rec["size"]
                and _sha256(dest) == rec["sha256"]
            ):
                skipped += 1
                names.append(name)
                continue
            try:
                cloud = load_any(f, entry.format, entry.columns)
                if merge:
                    other = apply(entry.merge_extrinsic, load_any(merge[k], entry.format, entry.columns))
                    cloud = PointCloud(np.vstack([cloud.points, other.points]))
                text = serialize_pcd(cloud)
                # validate before committing the file
                parse_pcd(io.StringIO(text))
                dest.write_text(text, encoding="ascii")
            except Exception as err:
                errors.append(f"{f}: {err}")
                continue
            ledger[name] = {"size": dest.stat().st_size, "sha256": _sha256(dest), "source": str(f)}
            converted += 1
            names.append(name)
        ledger_path.write_text(json.dumps(ledger, indent=1, sort_keys=True))
        if len(names) >= 2:
            spec = SequenceSpec(
                entry.name,
                names,
                entry.overlap_threshold,
                entry.bounds_local,
                entry.bounds_global,
                entry.seed,
                seq_dir,
            )
            write_sequence_spec(spec, seq_dir / "sequence.ini")
        else:
            report.failed_sequences.append(entry.name)
        report.converted[entry.name] = converted
        report.skipped[entry.name] = skipped
        if errors:
            report.errors[entry.name] = errors
            for e in errors:
                log.error("%s: %s", entry.name, e)
    return report
