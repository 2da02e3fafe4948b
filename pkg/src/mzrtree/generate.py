"""Synthetic dataset generators and an mzXML writer.

Uniform mode fills each spectrum with an exact number of nonzero columns
drawn without replacement, so per-spectrum and whole-dataset density match
the requested value. Peaked mode stamps Gaussian elution/envelope clusters,
producing the locally dense regions that exercise the dense tile path. Both
are pure functions of their spec, so benchmark datasets are replayable.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .model import DatasetMeta, SpectrumRecord
from .mzxml import PeaksEncoding, encode_peaks


class GenMode(Enum):
    UNIFORM = "uniform"
    PEAKED = "peaked"


@dataclass(frozen=True)
class GenSpec:
    """Parameters fully determining one synthetic dataset."""

    spectra_count: int
    mz_min: float
    mz_max: float
    resolution: float
    target_density: float
    mode: GenMode = GenMode.UNIFORM
    seed: int = 0
    ms_level: int = 1
    rt_step_s: float = 1.0

    def __post_init__(self):
        if self.spectra_count < 1:
            raise ValueError("spectra_count must be >= 1")
        if not 0.0 < self.target_density <= 1.0:
            raise ValueError("target_density must be in (0, 1]")

    def meta(self, **overrides) -> DatasetMeta:
        """Grid geometry matching this spec's output."""
        fields = dict(
            mz_min=self.mz_min,
            mz_max=self.mz_max,
            resolution=self.resolution,
            rt_axis=self.rt_axis(),
            ms_level=self.ms_level,
        )
        fields.update(overrides)
        return DatasetMeta(**fields)

    def rt_axis(self) -> tuple[float, ...]:
        return tuple(
            round((i + 1) * self.rt_step_s, 6) for i in range(self.spectra_count)
        )

    @property
    def cols(self) -> int:
        return self.meta().cols


def generate(spec: GenSpec) -> Iterator[SpectrumRecord]:
    if spec.mode is GenMode.UNIFORM:
        return generate_uniform(spec)
    return generate_peaked(spec)


def generate_uniform(spec: GenSpec) -> Iterator[SpectrumRecord]:
    """Each spectrum gets exactly round(d * cols) distinct nonzero columns."""
    meta = spec.meta()
    cols = meta.cols
    per_row = round(spec.target_density * cols)
    if per_row < 1:
        raise ValueError(
            f"density {spec.target_density} yields no peaks on a {cols}-column grid"
        )
    rng = np.random.default_rng(spec.seed)
    rt_axis = spec.rt_axis()
    grid_mz = spec.mz_min + np.arange(cols, dtype=np.float64) * spec.resolution
    for i in range(spec.spectra_count):
        chosen = np.sort(rng.choice(cols, size=per_row, replace=False))
        # map [0,1) draws onto (0, 1e6] so intensities are never zero
        inten = (1.0 - rng.random(per_row)) * 1.0e6
        yield SpectrumRecord(rt_axis[i], spec.ms_level, grid_mz[chosen], inten)


@dataclass(frozen=True)
class _Cluster:
    row_center: float
    col_center: float
    row_sigma: float
    col_sigma: float
    height: float
    row_lo: int
    row_hi: int  # inclusive


def _plan_clusters(spec: GenSpec, meta: DatasetMeta) -> list[_Cluster]:
    rng = np.random.default_rng(spec.seed)
    rows, cols = meta.rows, meta.cols
    target = round(spec.target_density * rows * cols)
    clusters: list[_Cluster] = []
    covered = 0
    while covered < target:
        elution_rows = rng.uniform(10.0, 40.0)
        envelope_da = rng.uniform(1.0, 4.0)
        half_r = max(elution_rows / 2.0, 1.0)
        half_c = max(envelope_da / (2.0 * spec.resolution), 1.0)
        rc = rng.uniform(0, rows - 1)
        cc = rng.uniform(0, cols - 1)
        row_lo = max(int(np.ceil(rc - half_r)), 0)
        row_hi = min(int(np.floor(rc + half_r)), rows - 1)
        if row_lo > row_hi:
            continue
        clusters.append(
            _Cluster(rc, cc, half_r / 2.0, half_c / 2.0, rng.uniform(1e4, 1e6),
                     row_lo, row_hi)
        )
        c = clusters[-1]
        # exact cell count of the elliptical stamp, overlaps between
        # clusters ignored (final density lands slightly under target)
        for r in range(row_lo, row_hi + 1):
            frac = 1.0 - ((r - rc) / half_r) ** 2
            if frac <= 0:
                continue
            extent = half_c * np.sqrt(frac)
            c0 = max(int(np.ceil(cc - extent)), 0)
            c1 = min(int(np.floor(cc + extent)), cols - 1)
            if c1 >= c0:
                covered += c1 - c0 + 1
    return clusters


def generate_peaked(spec: GenSpec) -> Iterator[SpectrumRecord]:
    """Gaussian clusters (10-40 rows by 1-4 Da) stamped until density is met."""
    meta = spec.meta()
    rows, cols = meta.rows, meta.cols
    clusters = _plan_clusters(spec, meta)
    by_row: list[list[_Cluster]] = [[] for _ in range(rows)]
    for c in clusters:
        for r in range(c.row_lo, c.row_hi + 1):
            by_row[r].append(c)
    rt_axis = spec.rt_axis()
    for r in range(rows):
        parts_c, parts_i = [], []
        for c in by_row[r]:
            half_r = 2.0 * c.row_sigma
            half_c = 2.0 * c.col_sigma
            frac = 1.0 - ((r - c.row_center) / half_r) ** 2
            if frac <= 0:
                continue
            extent = half_c * np.sqrt(frac)
            c0 = max(int(np.ceil(c.col_center - extent)), 0)
            c1 = min(int(np.floor(c.col_center + extent)), cols - 1)
            if c1 < c0:
                continue
            cc = np.arange(c0, c1 + 1, dtype=np.int64)
            dr = (r - c.row_center) / c.row_sigma
            dc = (cc - c.col_center) / c.col_sigma
            parts_c.append(cc)
            parts_i.append(c.height * np.exp(-0.5 * (dr * dr + dc * dc)))
        if not parts_c:
            yield SpectrumRecord(
                rt_axis[r], spec.ms_level,
                np.empty(0, dtype=np.float64), np.empty(0, dtype=np.float64),
            )
            continue
        cc = np.concatenate(parts_c)
        ii = np.concatenate(parts_i)
        uniq, inverse = np.unique(cc, return_inverse=True)
        summed = np.zeros(uniq.size, dtype=np.float64)
        np.add.at(summed, inverse, ii)
        mz = spec.mz_min + uniq.astype(np.float64) * spec.resolution
        yield SpectrumRecord(rt_axis[r], spec.ms_level, mz, summed)


def interleave_levels(*streams: Iterable[SpectrumRecord]) -> list[SpectrumRecord]:
    """Merge per-level record streams into one rt-ordered scan sequence."""
    merged = [rec for stream in streams for rec in stream]
    merged.sort(key=lambda r: (r.rt, r.ms_level))
    return merged


def emit_mzxml(
    records: Iterable[SpectrumRecord],
    path: str | Path,
    encoding: PeaksEncoding | None = None,
) -> int:
    """Write records as minimal mzXML; returns the number of scans written.

    Appends .gz transparently when the path ends in .gz.
    """
    enc = encoding or PeaksEncoding(precision=64)
    path = Path(path)
    records = list(records)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wt", encoding="ascii") as f:
        f.write('<?xml version="1.0" encoding="ISO-8859-1"?>\n')
        f.write('<mzXML xmlns="http://sashimi.sourceforge.net/schema_revision/mzXML_3.2">\n')
        f.write(f' <msRun scanCount="{len(records)}">\n')
        for num, rec in enumerate(records, start=1):
            pairs = np.column_stack((rec.mz, rec.intensity))
            b64 = encode_peaks(pairs, enc) if len(pairs) else ""
            rt_text = np.format_float_positional(rec.rt, trim="-")
            f.write(
                f'  <scan num="{num}" msLevel="{rec.ms_level}" '
                f'peaksCount="{len(pairs)}" retentionTime="PT{rt_text}S">\n'
            )
            f.write(
                f'   <peaks precision="{enc.precision}" byteOrder="network" '
                f'pairOrder="m/z-int">{b64}</peaks>\n'
            )
            f.write("  </scan>\n")
        f.write(" </msRun>\n")
        f.write("</mzXML>\n")
    return len(records)
