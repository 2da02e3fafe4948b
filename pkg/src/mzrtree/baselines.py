"""Naive comparison engines sharing the query semantics of the main engine.

FullScan reads every bounding box of the main store and filters. The other
two mirror the access patterns of row-optimized and chromatogram-optimized
designs: SpectrumMajor lays all rows out contiguously and fetches whole rows
in the queried retention range; ColumnMajor groups fixed-width column blocks
and fetches whole blocks in the queried m/z range. Records carry the same
CRC32 framing as the main store and every engine verifies what it reads, so
timing comparisons reflect access patterns rather than integrity policy.
"""

from __future__ import annotations

import os
import struct
import time
import zlib
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import CorruptionError
from .model import QueryRect
from .query import (
    QueryResult,
    QueryStats,
    assemble_groups,
    concat_parts,
    sort_row_major,
)
from .storage import STRIP_PREAMBLE, Store

ROWS_MAGIC = b"MZRTROWS"
COLS_MAGIC = b"MZRTCOLS"
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")

BASELINE_DIR = "baselines"


class BaselineKind(Enum):
    FULL_SCAN = "full-scan"
    SPECTRUM_MAJOR = "spectrum-major"
    COLUMN_MAJOR = "column-major"


def _pair_dtype(intensity_bits: int) -> np.dtype:
    return np.dtype([("c", "<u4"), ("i", "<f4" if intensity_bits == 32 else "<f8")])


def _triple_dtype(intensity_bits: int) -> np.dtype:
    return np.dtype(
        [("r", "<u4"), ("c", "<u4"), ("i", "<f4" if intensity_bits == 32 else "<f8")]
    )


def _write_offsets(path: Path, offsets: list[int]) -> None:
    body = _U32.pack(len(offsets)) + b"".join(_U64.pack(o) for o in offsets)
    path.write_bytes(body + _U32.pack(zlib.crc32(body)))


def _read_offsets(path: Path) -> np.ndarray:
    data = path.read_bytes()
    (stored,) = _U32.unpack_from(data, len(data) - 4)
    if zlib.crc32(data[:-4]) != stored:
        raise CorruptionError(f"{path.name}: checksum mismatch")
    (n,) = _U32.unpack_from(data, 0)
    return np.frombuffer(data, dtype="<u8", count=n, offset=4)


def _frame(body: bytes) -> bytes:
    return body + _U32.pack(zlib.crc32(body))


def _checked_record(data, start: int, end: int, label: str) -> memoryview:
    """Verify one length-delimited record's trailing CRC; return its body."""
    record = memoryview(data)[start:end]
    (stored,) = _U32.unpack_from(record, len(record) - 4)
    body = record[:-4]
    if zlib.crc32(body) != stored:
        raise CorruptionError(f"{label}: record checksum mismatch")
    return body


def _all_entries(store: Store):
    """Every entry of the store, via a sequential scan of all strips."""
    parts = []
    for strip_id in range(len(store.manifest.strips)):
        for bb in store.iter_all_bbs(strip_id):
            parts.append(bb.entries())
    if not parts:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0, dtype=store.meta.intensity_dtype)
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    inten = np.concatenate([p[2] for p in parts])
    order = np.lexsort((cols, rows))
    return rows[order], cols[order], inten[order]


def build_baselines(store: Store, out_dir: str | Path | None = None) -> Path:
    """Materialize both alternative layouts next to the store. Idempotent."""
    out = Path(out_dir) if out_dir else store.path / BASELINE_DIR
    out.mkdir(parents=True, exist_ok=True)
    done = out / "BUILT"
    if done.exists():
        return out
    rows, cols, inten = _all_entries(store)
    meta = store.meta
    bits = meta.intensity_bits

    pair_dt = _pair_dtype(bits)
    offsets = []
    with open(out / "spectrum_major.bin", "wb") as f:
        f.write(ROWS_MAGIC + _U16.pack(1))
        pos = len(ROWS_MAGIC) + 2
        bounds = np.searchsorted(rows, np.arange(meta.rows + 1))
        for r in range(meta.rows):
            lo, hi = bounds[r], bounds[r + 1]
            pairs = np.empty(hi - lo, dtype=pair_dt)
            pairs["c"] = cols[lo:hi]
            pairs["i"] = inten[lo:hi]
            blob = _frame(_U32.pack(hi - lo) + pairs.tobytes())
            offsets.append(pos)
            f.write(blob)
            pos += len(blob)
        offsets.append(pos)
    _write_offsets(out / "spectrum_major.idx", offsets)

    triple_dt = _triple_dtype(bits)
    width = meta.bb_width_cols
    n_blocks = (meta.cols + width - 1) // width
    blocks = cols // width
    order = np.lexsort((cols, rows, blocks))
    b_rows, b_cols, b_inten, blocks = (
        rows[order], cols[order], inten[order], blocks[order],
    )
    bounds = np.searchsorted(blocks, np.arange(n_blocks + 1))
    offsets = []
    with open(out / "column_major.bin", "wb") as f:
        f.write(COLS_MAGIC + _U16.pack(1))
        pos = len(COLS_MAGIC) + 2
        for b in range(n_blocks):
            lo, hi = bounds[b], bounds[b + 1]
            triples = np.empty(hi - lo, dtype=triple_dt)
            triples["r"] = b_rows[lo:hi]
            triples["c"] = b_cols[lo:hi]
            triples["i"] = b_inten[lo:hi]
            blob = _frame(_U32.pack(hi - lo) + triples.tobytes())
            offsets.append(pos)
            f.write(blob)
            pos += len(blob)
        offsets.append(pos)
    _write_offsets(out / "column_major.idx", offsets)
    done.touch()
    return out


class FullScanEngine:
    """Reads and decodes every bounding box, then filters by the rect."""

    name = "full-scan"

    def __init__(self, store_dir: str | Path):
        self.store = Store.open(store_dir)

    def close(self):
        self.store.close()

    def query(self, rect: QueryRect) -> QueryResult:
        t0 = time.perf_counter()
        stats = QueryStats()
        meta = self.store.meta
        rect = rect.clipped(meta)
        groups = []
        if not rect.is_empty:
            for strip_id, info in enumerate(self.store.manifest.strips):
                stats.bytes_read += info.bytes - STRIP_PREAMBLE
                parts = []
                for bb in self.store.iter_all_bbs(strip_id):
                    stats.bbs_touched += 1
                    parts.append(bb.scan(rect))
                cat = concat_parts(parts)
                if cat is not None:
                    groups.append(sort_row_major(*cat))
        result = assemble_groups(groups, meta, stats)
        stats.elapsed_s = time.perf_counter() - t0
        return result


class SpectrumMajorEngine:
    """Whole-row records; a query fetches the full row range in one read.

    Rows are stored in row order with columns ascending inside each record,
    so results assemble without any sort.
    """

    name = "spectrum-major"

    def __init__(self, store_dir: str | Path):
        store_dir = Path(store_dir)
        self.store = Store.open(store_dir)
        self.meta = self.store.meta
        self._offsets = _read_offsets(store_dir / BASELINE_DIR / "spectrum_major.idx")
        self._fd = os.open(store_dir / BASELINE_DIR / "spectrum_major.bin", os.O_RDONLY)
        self._pair_dt = _pair_dtype(self.meta.intensity_bits)

    def close(self):
        os.close(self._fd)
        self.store.close()

    def query(self, rect: QueryRect) -> QueryResult:
        t0 = time.perf_counter()
        stats = QueryStats()
        meta = self.meta
        rect = rect.clipped(meta)
        if rect.is_empty:
            result = assemble_groups([], meta, stats)
            stats.elapsed_s = time.perf_counter() - t0
            return result
        r0, r1 = rect.row_lo, rect.row_hi
        start, end = int(self._offsets[r0]), int(self._offsets[r1 + 1])
        data = os.pread(self._fd, end - start, start)
        stats.bytes_read = len(data)
        col_filter = rect.col_lo > 0 or rect.col_hi < meta.cols - 1
        parts = []
        for r in range(r0, r1 + 1):
            lo = int(self._offsets[r]) - start
            hi = int(self._offsets[r + 1]) - start
            body = _checked_record(data, lo, hi, f"row {r}")
            (count,) = _U32.unpack_from(body, 0)
            pairs = np.frombuffer(body, dtype=self._pair_dt, count=count, offset=4)
            cols = pairs["c"].astype(np.int64)
            inten = pairs["i"]
            if col_filter:
                keep = (cols >= rect.col_lo) & (cols <= rect.col_hi)
                cols, inten = cols[keep], inten[keep]
            parts.append((np.full(cols.size, r, dtype=np.int64), cols, inten))
        result = assemble_groups([concat_parts(parts)], meta, stats)
        stats.elapsed_s = time.perf_counter() - t0
        return result


class ColumnMajorEngine:
    """Fixed-width column blocks; a query fetches the full block range.

    Blocks ascend in column order and are row-major inside, so one stable
    row sort over the concatenated blocks restores row-major order.
    """

    name = "column-major"

    def __init__(self, store_dir: str | Path):
        store_dir = Path(store_dir)
        self.store = Store.open(store_dir)
        self.meta = self.store.meta
        self._offsets = _read_offsets(store_dir / BASELINE_DIR / "column_major.idx")
        self._fd = os.open(store_dir / BASELINE_DIR / "column_major.bin", os.O_RDONLY)
        self._triple_dt = _triple_dtype(self.meta.intensity_bits)

    def close(self):
        os.close(self._fd)
        self.store.close()

    def query(self, rect: QueryRect) -> QueryResult:
        t0 = time.perf_counter()
        stats = QueryStats()
        meta = self.meta
        rect = rect.clipped(meta)
        if rect.is_empty:
            result = assemble_groups([], meta, stats)
            stats.elapsed_s = time.perf_counter() - t0
            return result
        width = meta.bb_width_cols
        b0 = rect.col_lo // width
        b1 = rect.col_hi // width
        start, end = int(self._offsets[b0]), int(self._offsets[b1 + 1])
        data = os.pread(self._fd, end - start, start)
        stats.bytes_read = len(data)
        row_filter = rect.row_lo > 0 or rect.row_hi < meta.rows - 1
        parts = []
        for b in range(b0, b1 + 1):
            lo = int(self._offsets[b]) - start
            hi = int(self._offsets[b + 1]) - start
            body = _checked_record(data, lo, hi, f"block {b}")
            (count,) = _U32.unpack_from(body, 0)
            triples = np.frombuffer(body, dtype=self._triple_dt, count=count, offset=4)
            rows = triples["r"].astype(np.int64)
            cols = triples["c"].astype(np.int64)
            inten = triples["i"]
            # only edge blocks can stick out of the column window
            col_filter = rect.col_lo > b * width or rect.col_hi < (b + 1) * width - 1
            if col_filter or row_filter:
                keep = np.ones(rows.size, dtype=bool)
                if col_filter:
                    keep &= (cols >= rect.col_lo) & (cols <= rect.col_hi)
                if row_filter:
                    keep &= (rows >= rect.row_lo) & (rows <= rect.row_hi)
                rows, cols, inten = rows[keep], cols[keep], inten[keep]
            parts.append((rows, cols, inten))
        cat = concat_parts(parts)
        groups = [sort_row_major(*cat)] if cat is not None else []
        result = assemble_groups(groups, meta, stats)
        stats.elapsed_s = time.perf_counter() - t0
        return result
