"""Shared helpers: random dataset construction and store building."""

from __future__ import annotations

import numpy as np
import pytest

from mzrtree.builder import build_store
from mzrtree.model import DatasetMeta, SpectrumRecord
from mzrtree.storage import Store


def make_meta(rows=10, cols=1000, resolution=0.01, mz_min=400.0, **kw) -> DatasetMeta:
    """Grid with exactly `cols` columns at the given resolution."""
    mz_max = mz_min + (cols - 1) * resolution
    rt_axis = kw.pop("rt_axis", tuple(float(i + 1) for i in range(rows)))
    return DatasetMeta(
        mz_min=mz_min, mz_max=mz_max, resolution=resolution, rt_axis=rt_axis, **kw
    )


def random_records(
    rng: np.random.Generator, meta: DatasetMeta, density: float
) -> list[SpectrumRecord]:
    """Rows with a binomially varying number of distinct nonzero columns."""
    records = []
    for r in range(meta.rows):
        n = rng.binomial(meta.cols, density)
        cols = np.sort(rng.choice(meta.cols, size=n, replace=False))
        mz = meta.mz_min + cols.astype(np.float64) * meta.resolution
        inten = rng.uniform(1.0, 1e6, size=n)
        records.append(SpectrumRecord(meta.rt_axis[r], meta.ms_level, mz, inten))
    return records


def build_from_records(records, meta: DatasetMeta, out_dir, **kw) -> Store:
    build_store(
        records,
        out_dir,
        mz_min=meta.mz_min,
        mz_max=meta.mz_max,
        resolution=meta.resolution,
        ms_level=meta.ms_level,
        **kw,
    )
    return Store.open(out_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
