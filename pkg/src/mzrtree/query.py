"""Range queries against an opened store: index lookup, strip-ordered BB
fetches, and scan/merge into one sorted result."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from itertools import groupby

import numpy as np

from .index import query_index
from .model import DatasetMeta, PeakEntry, QueryRect, query_rect_from_physical
from .storage import Store

PEPTIDE_MZ_WINDOW_DA = 5.0


class PeptideSize(Enum):
    """Row extent of the two peptide-shaped workloads."""

    SMALL = 60
    LARGE = 200


@dataclass
class QueryStats:
    bbs_touched: int = 0
    nodes_visited: int = 0
    bytes_read: int = 0
    elapsed_s: float = 0.0


@dataclass
class QueryResult:
    """Matched entries as parallel arrays sorted by (row, col)."""

    rows: np.ndarray
    cols: np.ndarray
    intensities: np.ndarray
    stats: QueryStats = field(default_factory=QueryStats)

    def __len__(self) -> int:
        return int(self.rows.size)

    @property
    def entries(self) -> list[PeakEntry]:
        return [
            PeakEntry(int(r), int(c), float(i))
            for r, c, i in zip(self.rows, self.cols, self.intensities)
        ]

    def total_intensity(self) -> float:
        return float(np.sum(self.intensities, dtype=np.float64))


def _empty_result(meta: DatasetMeta, stats: QueryStats) -> QueryResult:
    return QueryResult(
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=meta.intensity_dtype),
        stats,
    )


def sort_row_major(
    rows: np.ndarray, cols: np.ndarray, inten: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stable sort by row of arrays whose equal-row runs are already
    column-ordered (true whenever column-disjoint parts were concatenated in
    ascending column order). Narrow keys hit numpy's radix path."""
    if rows.size <= 1:
        return rows, cols, inten
    lo = int(rows.min())
    span = int(rows.max()) - lo
    if span == 0:
        return rows, cols, inten
    if span < 65536:
        order = np.argsort((rows - lo).astype(np.uint16), kind="stable")
    else:
        order = np.argsort(rows, kind="stable")
    return rows[order], cols[order], inten[order]


def concat_parts(parts: list) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    parts = [p for p in parts if p[0].size]
    if not parts:
        return None
    if len(parts) == 1:
        return parts[0]
    return (
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
    )


def assemble_groups(groups: list, meta: DatasetMeta, stats: QueryStats) -> QueryResult:
    """Build a result from per-group sorted arrays with ascending disjoint rows."""
    groups = [g for g in groups if g is not None and g[0].size]
    if not groups:
        return _empty_result(meta, stats)
    if len(groups) == 1:
        rows, cols, inten = groups[0]
    else:
        rows = np.concatenate([g[0] for g in groups])
        cols = np.concatenate([g[1] for g in groups])
        inten = np.concatenate([g[2] for g in groups])
    return QueryResult(rows, cols, inten, stats)


def range_query(store: Store, rect: QueryRect) -> QueryResult:
    """All entries inside rect, fetched strip by strip in ascending offset order.

    Within a strip, scans come back tile by tile (ascending columns, row-major
    inside a tile), so a stable row sort restores row-major order; strips are
    disjoint ascending row bands, so their results concatenate directly.
    """
    t0 = time.perf_counter()
    stats = QueryStats()
    rect = rect.clipped(store.meta)
    if rect.is_empty:
        stats.elapsed_s = time.perf_counter() - t0
        return _empty_result(store.meta, stats)
    refs, visited = query_index(store.index_root, rect)
    stats.nodes_visited = visited
    groups = []
    for strip_id, group in groupby(refs, key=lambda r: r.strip_id):
        offsets = [r.offset for r in group]
        bbs, nbytes = store.read_bb_run(strip_id, offsets)
        stats.bytes_read += nbytes
        stats.bbs_touched += len(bbs)
        cat = concat_parts([bb.scan(rect) for bb in bbs])
        if cat is not None:
            groups.append(sort_row_major(*cat))
    result = assemble_groups(groups, store.meta, stats)
    stats.elapsed_s = time.perf_counter() - t0
    return result


def chromatogram(store: Store, mz_lo: float, mz_hi: float) -> QueryResult:
    """All retention times over a physical m/z window (half-open bounds)."""
    meta = store.meta
    rect = query_rect_from_physical(
        float("-inf"), float("inf"), mz_lo, mz_hi, meta
    )
    return range_query(store, rect)


def spectrum_block(store: Store, rt_lo_row: int, n_rows: int = 20) -> QueryResult:
    """The full m/z axis over n_rows consecutive rows starting at rt_lo_row."""
    meta = store.meta
    rect = QueryRect(rt_lo_row - 1, rt_lo_row + n_rows - 1, -1, meta.cols - 1)
    return range_query(store, rect.clipped(meta))


def peptide_rect(
    meta: DatasetMeta, mz_center: float, rt_center_row: int, size: PeptideSize
) -> QueryRect:
    """5 Da by {60, 200}-row rect centered on a point, clipped to the extent."""
    half_da = PEPTIDE_MZ_WINDOW_DA / 2
    n = size.value
    row_lo = rt_center_row - n // 2
    mz_rect = query_rect_from_physical(
        float("-inf"),
        float("inf"),
        mz_center - half_da,
        mz_center + half_da,
        meta,
    )
    if mz_rect.is_empty:
        return QueryRect.empty()
    rect = QueryRect(row_lo - 1, row_lo + n - 1, mz_rect.mz1, mz_rect.mz2)
    return rect.clipped(meta)


def peptide_query(
    store: Store, mz_center: float, rt_center_row: int, size: PeptideSize
) -> QueryResult:
    return range_query(store, peptide_rect(store.meta, mz_center, rt_center_row, size))
