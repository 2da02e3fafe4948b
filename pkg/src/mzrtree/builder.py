"""Build pipeline: spectra in, store directory out.

Builds run in two passes so memory stays bounded by one strip. The first
pass collects the retention-time axis and a peak-count estimate; the second
snaps each spectrum onto the grid, accumulates rows until a strip boundary,
then tiles the strip into bounding boxes and appends them to the strip file.
The index and manifest are written last. Output is deterministic: the same
input always produces byte-identical files.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import IngestError
from .index import BBRef, IndexParams, build_tree, serialize_index
from .model import DatasetMeta, SpectrumRecord
from .mzxml import IngestStats, open_mzxml, parse_mzxml, snap_to_grid
from .storage import (
    FORMAT_VERSION,
    INDEX_NAME,
    MANIFEST_NAME,
    Store,
    StoreManifest,
    StripWriter,
    build_bbs,
    choose_k,
    plan_strips,
)

DEFAULT_RAM_BUDGET = 256 * 1024 * 1024

RecordSource = Callable[[], Iterable[SpectrumRecord]]


@dataclass
class BuildResult:
    out_dir: Path
    manifest: StoreManifest
    stats: IngestStats
    elapsed_s: float
    bb_count: int

    def open(self) -> Store:
        return Store.open(self.out_dir)


def _as_source(source) -> RecordSource:
    if callable(source):
        return source
    if isinstance(source, (str, Path)):
        raise TypeError("pass mzXML paths through build_store_from_mzxml")
    records: Sequence[SpectrumRecord] = list(source)
    return lambda: iter(records)


def build_store(
    source,
    out_dir: str | Path,
    *,
    mz_min: float,
    mz_max: float,
    resolution: float,
    ms_level: int = 1,
    k: int | None = None,
    bb_width_da: float = 5.0,
    index_params: IndexParams | None = None,
    intensity_bits: int = 32,
    ram_budget_bytes: int = DEFAULT_RAM_BUDGET,
) -> BuildResult:
    """Build a store from a replayable record source.

    `source` is a sequence of SpectrumRecords or a zero-argument callable
    returning a fresh iterator (letting mzXML and generator inputs stream
    twice instead of being held in memory).
    """
    t0 = time.perf_counter()
    src = _as_source(source)
    params = index_params or IndexParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rt_axis: list[float] = []
    total_peaks = 0
    for record in src():
        rt_axis.append(record.rt)
        total_peaks += int(record.mz.size)
    if not rt_axis:
        raise IngestError(f"no spectra found at MS level {ms_level}")
    if any(b < a for a, b in zip(rt_axis, rt_axis[1:])):
        raise IngestError("spectra are not in retention-time order")

    rows = len(rt_axis)
    probe = DatasetMeta(
        mz_min=mz_min,
        mz_max=mz_max,
        resolution=resolution,
        rt_axis=tuple(rt_axis),
        ms_level=ms_level,
    )
    if k is None:
        est_density = min(total_peaks / probe.cells, 1.0)
        k = choose_k(rows, probe.cols, est_density, ram_budget_bytes)
    meta = DatasetMeta(
        mz_min=mz_min,
        mz_max=mz_max,
        resolution=resolution,
        rt_axis=tuple(rt_axis),
        ms_level=ms_level,
        strip_count=k,
        bb_width_cols=round(bb_width_da / resolution),
        intensity_bits=intensity_bits,
    )

    stats = IngestStats()
    strips = plan_strips(rows, k)
    strip_infos = []
    refs: list[BBRef] = []
    nnz = 0
    census = {
        "dense_bbs": 0,
        "sparse_bbs": 0,
        "dense_record_bytes": 0,
        "sparse_record_bytes": 0,
    }

    strip_iter = iter(enumerate(strips))
    strip_id, (row_lo, row_hi) = next(strip_iter)
    pending: list = []

    def flush(sid: int, lo: int, hi: int, rows_buf: list):
        writer = StripWriter(out_dir / f"strip_{sid}.bin", sid, lo, hi)
        for bb in build_bbs(rows_buf, meta):
            offset, nbytes = writer.append(bb)
            refs.append(
                BBRef(bb.top_rt, bb.bottom_rt, bb.left_mz, bb.right_mz, sid, offset)
            )
            kind = "dense" if bb.dense else "sparse"
            census[f"{kind}_bbs"] += 1
            census[f"{kind}_record_bytes"] += nbytes
        strip_infos.append(writer.finish())

    for row, record in enumerate(src()):
        while row >= row_hi:
            flush(strip_id, row_lo, row_hi, pending)
            pending = []
            strip_id, (row_lo, row_hi) = next(strip_iter)
        cols, inten = snap_to_grid(record, meta, stats)
        nnz += int(cols.size)
        if cols.size:
            pending.append((row, cols, inten))
    flush(strip_id, row_lo, row_hi, pending)
    for strip_id, (row_lo, row_hi) in strip_iter:
        flush(strip_id, row_lo, row_hi, [])

    root = build_tree(refs, params) if refs else None
    index_bytes = serialize_index(root, params)
    (out_dir / INDEX_NAME).write_bytes(index_bytes)

    manifest = StoreManifest(
        format_version=FORMAT_VERSION,
        meta=meta,
        nnz=nnz,
        strips=strip_infos,
        index_file=INDEX_NAME,
        index_bytes=len(index_bytes),
        # over the body only: a whole-file CRC would be the constant CRC-32
        # residue, since the file ends with its own checksum
        index_crc32=zlib.crc32(index_bytes[:-4]),
        index_params={"d": params.d, "f": params.f, "w": len(refs)},
        census=census,
    )
    (out_dir / MANIFEST_NAME).write_text(manifest.to_json())
    return BuildResult(
        out_dir=out_dir,
        manifest=manifest,
        stats=stats,
        elapsed_s=time.perf_counter() - t0,
        bb_count=len(refs),
    )


def build_store_from_mzxml(
    path: str | Path,
    out_dir: str | Path,
    *,
    mz_min: float | None = None,
    mz_max: float | None = None,
    resolution: float = 0.001,
    ms_level: int = 1,
    **kwargs,
) -> BuildResult:
    """Build from an mzXML file, inferring the m/z range when not given.

    The file is streamed up to three times (range probe, row count, build),
    never held in memory.
    """
    path = Path(path)
    if mz_min is None or mz_max is None:
        lo, hi = _probe_mz_range(path, ms_level)
        mz_min = lo if mz_min is None else mz_min
        mz_max = hi if mz_max is None else mz_max

    def source():
        with open_mzxml(path) as f:
            yield from parse_mzxml(f, ms_level)

    return build_store(
        source,
        out_dir,
        mz_min=mz_min,
        mz_max=mz_max,
        resolution=resolution,
        ms_level=ms_level,
        **kwargs,
    )


def _probe_mz_range(path: Path, ms_level: int) -> tuple[float, float]:
    lo, hi = None, None
    with open_mzxml(path) as f:
        for record in parse_mzxml(f, ms_level):
            if record.mz.size:
                rlo, rhi = float(record.mz.min()), float(record.mz.max())
                lo = rlo if lo is None else min(lo, rlo)
                hi = rhi if hi is None else max(hi, rhi)
    if lo is None or lo == hi:
        # degenerate or empty range; widen so the grid is valid
        lo = 0.0 if lo is None else lo
        hi = lo + 1.0
    return lo, hi
