"""Benchmark protocol: timed query sweeps over the four standard workloads.

For each workload the harness builds a fixed set of rectangles whose centers
sit at even fractions of each axis, so the sweep spans the whole dataset.
Load time (opening manifest, index, or offset tables) and access time (the
queries themselves) are measured separately; the whole sweep is repeated and
averaged. Before timing, every engine's entries are checked against the main
engine; a mismatch aborts the run.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .baselines import (
    ColumnMajorEngine,
    FullScanEngine,
    SpectrumMajorEngine,
    build_baselines,
)
from .errors import BenchError
from .model import DatasetMeta, QueryRect, query_rect_from_physical
from .query import PeptideSize, peptide_rect, range_query
from .storage import Store


class Workload(Enum):
    CHROM = "chrom"
    SPECTRA = "spectra"
    PEP_SMALL = "pep-small"
    PEP_LARGE = "pep-large"


MZRTREE_ENGINE = "mzrtree"
BASELINE_ENGINES = ("full-scan", "spectrum-major", "column-major")
ALL_ENGINES = (MZRTREE_ENGINE,) + BASELINE_ENGINES

CHROM_WINDOW_DA = 5.0
SPECTRA_ROWS = 20


class MzRTreeEngine:
    name = MZRTREE_ENGINE

    def __init__(self, store_dir):
        self.store = Store.open(store_dir)

    def close(self):
        self.store.close()

    def query(self, rect: QueryRect):
        return range_query(self.store, rect)


_ENGINE_CLASSES = {
    MZRTREE_ENGINE: MzRTreeEngine,
    "full-scan": FullScanEngine,
    "spectrum-major": SpectrumMajorEngine,
    "column-major": ColumnMajorEngine,
}


def workload_rects(
    meta: DatasetMeta, workload: Workload, n_queries: int = 10
) -> list[QueryRect]:
    """Query rectangles with centers at even fractions of the extent."""
    rects = []
    mz_span = meta.mz_max - meta.mz_min
    for i in range(n_queries):
        frac = (i + 0.5) / n_queries
        mz_center = meta.mz_min + frac * mz_span
        row_center = round(frac * (meta.rows - 1))
        if workload is Workload.CHROM:
            rect = query_rect_from_physical(
                float("-inf"),
                float("inf"),
                mz_center - CHROM_WINDOW_DA / 2,
                mz_center + CHROM_WINDOW_DA / 2,
                meta,
            )
        elif workload is Workload.SPECTRA:
            row_lo = max(min(row_center - SPECTRA_ROWS // 2, meta.rows - SPECTRA_ROWS), 0)
            rect = QueryRect(
                row_lo - 1, row_lo + SPECTRA_ROWS - 1, -1, meta.cols - 1
            ).clipped(meta)
        elif workload is Workload.PEP_SMALL:
            rect = peptide_rect(meta, mz_center, row_center, PeptideSize.SMALL)
        else:
            rect = peptide_rect(meta, mz_center, row_center, PeptideSize.LARGE)
        rects.append(rect)
    return rects


@dataclass
class BenchRow:
    engine: str
    workload: str
    queries: int
    reps: int
    access_mean_s: float
    access_min_s: float
    access_max_s: float
    load_mean_s: float
    load_min_s: float
    load_max_s: float
    bytes_read: int
    entries: int


@dataclass
class BenchReport:
    rows: list[BenchRow]
    store: dict
    protocol: dict
    env: dict
    concurrency: dict | None = None

    def row(self, engine: str, workload: str) -> BenchRow:
        for r in self.rows:
            if r.engine == engine and r.workload == workload:
                return r
        raise KeyError(f"no row for {engine}/{workload}")

    def to_json(self) -> str:
        doc = {
            "rows": [asdict(r) for r in self.rows],
            "store": self.store,
            "protocol": self.protocol,
            "env": self.env,
        }
        if self.concurrency is not None:
            doc["concurrency"] = self.concurrency
        return json.dumps(doc, indent=2, sort_keys=True)

    def write_json(self, path) -> None:
        Path(path).write_text(self.to_json())

    def write_csv(self, path) -> None:
        fields = [f.name for f in BenchRow.__dataclass_fields__.values()]
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fields)
            writer.writeheader()
            for r in self.rows:
                writer.writerow(asdict(r))


def _env_fingerprint() -> dict:
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpu_count": os.cpu_count(),
    }


def _store_summary(store: Store) -> dict:
    m = store.manifest
    files = [s.file for s in m.strips] + [m.index_file, "manifest.json"]
    size = sum((store.path / f).stat().st_size for f in files)
    return {
        "path": str(store.path),
        "rows": m.meta.rows,
        "cols": m.meta.cols,
        "nnz": m.nnz,
        "density": m.nnz / m.meta.cells,
        "strip_count": m.meta.strip_count,
        "bb_count": m.index_params.get("w"),
        "index_params": m.index_params,
        "store_bytes": size,
        "index_bytes": m.index_bytes,
        "census": m.census,
    }


def _results_equal(a, b) -> bool:
    return (
        len(a) == len(b)
        and np.array_equal(a.rows, b.rows)
        and np.array_equal(a.cols, b.cols)
        and np.array_equal(a.intensities, b.intensities)
    )


def run_bench(
    store_dir,
    *,
    reps: int = 10,
    queries: int = 10,
    engines: tuple[str, ...] = ALL_ENGINES,
    workloads: tuple[Workload, ...] = tuple(Workload),
    verify_results: bool = True,
    threads: int = 0,
) -> BenchReport:
    """Run the full protocol on one built store."""
    store_dir = Path(store_dir)
    with Store.open(store_dir) as probe:
        meta = probe.meta
        store_info = _store_summary(probe)
        if any(e in engines for e in ("spectrum-major", "column-major")):
            build_baselines(probe)

    rect_sets = {w: workload_rects(meta, w, queries) for w in workloads}
    reference: dict[Workload, list] = {}
    rows: list[BenchRow] = []

    ordered = [e for e in ALL_ENGINES if e in engines]
    if verify_results and MZRTREE_ENGINE not in ordered:
        ordered = [MZRTREE_ENGINE] + ordered
    for name in ordered:
        cls = _ENGINE_CLASSES[name]
        load_times = []
        engine = None
        for _ in range(max(reps, 1)):
            if engine is not None:
                engine.close()
            t0 = time.perf_counter()
            engine = cls(store_dir)
            load_times.append(time.perf_counter() - t0)
        try:
            for workload in workloads:
                rects = rect_sets[workload]
                # warm-up sweep doubles as the result-equality check
                warm = [engine.query(r) for r in rects]
                if verify_results:
                    if name == MZRTREE_ENGINE:
                        reference[workload] = warm
                    else:
                        for rect, got, want in zip(rects, warm, reference[workload]):
                            if not _results_equal(got, want):
                                raise BenchError(
                                    f"{name} disagrees with {MZRTREE_ENGINE} on "
                                    f"{workload.value} rect {rect}"
                                )
                sweep_times = []
                for _ in range(reps):
                    total = 0.0
                    for rect in rects:
                        t0 = time.perf_counter()
                        engine.query(rect)
                        total += time.perf_counter() - t0
                    sweep_times.append(total)
                if name in engines:
                    rows.append(
                        BenchRow(
                            engine=name,
                            workload=workload.value,
                            queries=len(rects),
                            reps=reps,
                            access_mean_s=statistics.fmean(sweep_times),
                            access_min_s=min(sweep_times),
                            access_max_s=max(sweep_times),
                            load_mean_s=statistics.fmean(load_times),
                            load_min_s=min(load_times),
                            load_max_s=max(load_times),
                            bytes_read=sum(r.stats.bytes_read for r in warm),
                            entries=sum(len(r) for r in warm),
                        )
                    )
        finally:
            if engine is not None:
                engine.close()

    concurrency = None
    if threads > 1:
        concurrency = _throughput_check(store_dir, rect_sets, threads)

    return BenchReport(
        rows=rows,
        store=store_info,
        protocol={
            "reps": reps,
            "queries": queries,
            "warmup_sweeps": 1,
            "engines": list(engines),
            "workloads": [w.value for w in workloads],
            "verified": bool(verify_results),
        },
        env=_env_fingerprint(),
        concurrency=concurrency,
    )


def _throughput_check(store_dir, rect_sets, threads: int) -> dict:
    """Concurrent readers on one shared store must agree with serial results."""
    rects = [r for rs in rect_sets.values() for r in rs]
    with Store.open(store_dir) as store:
        serial = [range_query(store, r) for r in rects]
        t0 = time.perf_counter()
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parallel = list(pool.map(lambda r: range_query(store, r), rects))
        elapsed = time.perf_counter() - t0
    for got, want in zip(parallel, serial):
        if not _results_equal(got, want):
            raise BenchError("concurrent query returned different entries")
    return {
        "threads": threads,
        "queries": len(rects),
        "elapsed_s": elapsed,
        "queries_per_s": len(rects) / elapsed if elapsed > 0 else float("inf"),
        "ok": True,
    }
