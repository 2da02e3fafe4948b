"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with `pytest tests/test_acceptance.py -v -s`."""

import math
import time
from contextlib import contextmanager
from types import SimpleNamespace

import numpy as np
import pytest

from mzrtree.bench import run_bench
from mzrtree.builder import build_store, build_store_from_mzxml
from mzrtree.generate import GenMode, GenSpec, emit_mzxml, generate, interleave_levels
from mzrtree.index import IndexParams, build_tree, iter_leaf_refs, tree_height
from mzrtree.model import DatasetMeta, QueryRect
from mzrtree.mzxml import PeaksEncoding
from mzrtree.oracle import dense_matrix, matrix_scan
from mzrtree.query import range_query
from mzrtree.storage import (
    BB_RECORD_OVERHEAD,
    Store,
    build_bbs,
    serialize_bb,
)

from test_index import (
    canonical,
    check_mbr_tight,
    oracle_height_bound,
    oracle_partition,
    random_refs,
)
from mzrtree.index import partition_groups


@contextmanager
def criterion(number: int, name: str, budget_s: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {number} ({name}): FAIL")
        raise
    elapsed = time.perf_counter() - start
    assert elapsed < budget_s, f"criterion {number} took {elapsed:.1f}s > {budget_s}s"
    print(f"\nACCEPTANCE {number} ({name}): PASS [{elapsed:.1f}s]")


def _spec(rows, cols, density, mode, seed, res=0.01):
    return GenSpec(
        spectra_count=rows,
        mz_min=400.0,
        mz_max=400.0 + (cols - 1) * res,
        resolution=res,
        target_density=density,
        mode=mode,
        seed=seed,
    )


def test_criterion_1_oracle_correctness(tmp_path):
    """range_query vs brute-force matrix scan on random datasets."""
    with criterion(1, "oracle correctness", 120):
        rng = np.random.default_rng(1001)
        datasets = 100
        rects_each = 100
        for i in range(datasets):
            rows = int(rng.integers(5, 51))
            cols = int(rng.integers(500, 20001))
            density = float(rng.uniform(0.005, 0.30))
            mode = GenMode.UNIFORM if i % 2 == 0 else GenMode.PEAKED
            spec = _spec(rows, cols, density, mode, seed=int(rng.integers(1 << 31)))
            records = list(generate(spec))
            meta = spec.meta()
            k = int(rng.integers(1, min(rows, 6) + 1))
            out = tmp_path / f"d{i}"
            build_store(
                records, out,
                mz_min=spec.mz_min, mz_max=spec.mz_max, resolution=spec.resolution,
                k=k,
            )
            matrix = dense_matrix(records, meta)
            with Store.open(out) as store:
                assert store.manifest.nnz == int(np.count_nonzero(matrix))
                for _ in range(rects_each):
                    a, b = sorted(rng.integers(-1, rows, size=2))
                    c, d = sorted(rng.integers(-1, cols, size=2))
                    rect = QueryRect(int(a), int(b), int(c), int(d))
                    got = range_query(store, rect)
                    er, ec, ei = matrix_scan(matrix, rect)
                    assert np.array_equal(got.rows, er)
                    assert np.array_equal(got.cols, ec)
                    assert np.array_equal(got.intensities, ei)


def test_criterion_2_partition_and_height():
    """Tree structure invariants across the full size ladder."""
    with criterion(2, "partition/height structure", 60):
        rng = np.random.default_rng(2002)
        params = IndexParams()
        for w in (1, 6, 7, 200, 201, 1200, 7200, 100_000):
            refs = random_refs(rng, w)
            root = build_tree(refs, params)
            assert tree_height(root) <= oracle_height_bound(w, params.f), f"W={w}"
            leaves = sorted(iter_leaf_refs(root), key=lambda r: (r.strip_id, r.offset))
            assert leaves == sorted(refs, key=lambda r: (r.strip_id, r.offset))
            check_mbr_tight(root)
        for trial in range(25):
            refs = random_refs(rng, int(rng.integers(7, 60)))
            got = partition_groups(refs, IndexParams(f=4))
            want = oracle_partition(refs)
            assert [canonical(g) for g in got] == [canonical(g) for g in want]


def test_criterion_3_dense_sparse_rule():
    """Representation flips exactly at half occupancy; sizes are exact."""
    with criterion(3, "dense/sparse rule", 30):
        meta = DatasetMeta(
            mz_min=400.0, mz_max=500.0, resolution=0.01,
            rt_axis=tuple(float(i + 1) for i in range(64)),
        )
        for r, c in ((10, 10), (9, 11), (7, 13), (1, 20), (16, 5)):
            area = r * c
            half = math.ceil(area / 2)
            cells = [(i // c, i % c) for i in range(area)]
            corners = [(0, 0), (r - 1, c - 1)]
            interior = [x for x in cells if x not in corners]
            for nnz in (half - 1, half, half + 1):
                if nnz > area or nnz < 2:
                    continue
                chosen = corners + interior[: nnz - 2]
                by_row = {}
                for rr, cc in chosen:
                    by_row.setdefault(rr, []).append(cc)
                strip_rows = [
                    (rr, np.array(sorted(ccs)), np.ones(len(ccs)))
                    for rr, ccs in sorted(by_row.items())
                ]
                (bb,) = build_bbs(strip_rows, meta)
                assert bb.cells == area and bb.nnz == nnz
                assert bb.dense is (nnz >= half), (r, c, nnz)
                data = serialize_bb(bb)
                if bb.dense:
                    assert len(data) == BB_RECORD_OVERHEAD + area * 4
                else:
                    rows_present = len(strip_rows)
                    expected = 4 + rows_present * 8 + nnz * 8
                    assert len(data) == BB_RECORD_OVERHEAD + expected
                    assert (len(data) - BB_RECORD_OVERHEAD) / nnz <= 4 + 12 + 8


@pytest.fixture(scope="session")
def survey_dataset(tmp_path_factory):
    """Peaked dataset at protocol scale: 2130 spectra, 0.01 Da, ~5% density."""
    root = tmp_path_factory.mktemp("survey")
    spec = GenSpec(
        spectra_count=2130, mz_min=400.0, mz_max=539.99, resolution=0.01,
        target_density=0.05, mode=GenMode.PEAKED, seed=42,
    )
    records = list(generate(spec))
    mzxml = root / "survey.mzxml"
    emit_mzxml(records, mzxml, PeaksEncoding(precision=64))
    store_dir = root / "store"
    build_store_from_mzxml(
        mzxml, store_dir,
        mz_min=spec.mz_min, mz_max=spec.mz_max, resolution=spec.resolution,
        k=107,
    )
    return SimpleNamespace(spec=spec, mzxml=mzxml, store_dir=store_dir)


def test_criterion_4_space_claim(survey_dataset):
    """Store must stay at or below 70% of its 64-bit mzXML rendition."""
    with criterion(4, "space claim", 300):
        with Store.open(survey_dataset.store_dir) as store:
            m = store.manifest
            density = m.nnz / m.meta.cells
            assert 0.03 <= density <= 0.07, f"density {density:.4f} not ~5%"
            files = [s.file for s in m.strips] + [m.index_file, "manifest.json"]
            store_bytes = sum(
                (survey_dataset.store_dir / f).stat().st_size for f in files
            )
        mzxml_bytes = survey_dataset.mzxml.stat().st_size
        ratio = store_bytes / mzxml_bytes
        print(f"\n  store/mzxml = {ratio:.3f} ({store_bytes} / {mzxml_bytes} bytes)")
        assert ratio <= 0.70


def test_criterion_5_query_speed(survey_dataset):
    """Access-time ordering against the three baselines (protocol timing)."""
    with criterion(5, "query-speed claim", 600):
        report = run_bench(survey_dataset.store_dir, reps=10, queries=10)

        def access(engine, workload):
            return report.row(engine, workload).access_mean_s

        failures = []
        for w in ("pep-small", "pep-large"):
            mz = access("mzrtree", w)
            if not mz <= access("full-scan", w) / 10:
                failures.append(f"{w}: mzrtree {mz:.4f}s > full-scan/10")
            if not mz <= access("spectrum-major", w):
                failures.append(f"{w}: mzrtree {mz:.4f}s > spectrum-major")
            if not mz <= access("column-major", w):
                failures.append(f"{w}: mzrtree {mz:.4f}s > column-major")
        # on the baselines' own turf: within 1.5x of the best of them
        for w in ("chrom", "spectra"):
            mz = access("mzrtree", w)
            best_engine, best = min(
                ((e, access(e, w)) for e in
                 ("full-scan", "spectrum-major", "column-major")),
                key=lambda t: t[1],
            )
            print(f"\n  {w}: mzrtree {mz * 1e3:.2f}ms vs best "
                  f"{best_engine} {best * 1e3:.2f}ms (ratio {mz / best:.2f})")
            if not mz <= 1.5 * best:
                failures.append(
                    f"{w}: mzrtree {mz:.4f}s > 1.5x {best_engine} ({best:.4f}s)"
                )
        assert not failures, "; ".join(failures)


def test_criterion_6_density_scalability(tmp_path):
    """Access time growth across a 2.5%..28% density sweep, load ~constant."""
    with criterion(6, "density scalability", 900):
        rows, cols = 240, 20000
        reports = {}
        for density in (0.025, 0.08, 0.16, 0.28):
            spec = _spec(rows, cols, density, GenMode.UNIFORM, seed=606)
            out = tmp_path / f"d{int(density * 1000)}"
            build_store(
                list(generate(spec)), out,
                mz_min=spec.mz_min, mz_max=spec.mz_max, resolution=spec.resolution,
                k=12,
            )
            reports[density] = run_bench(
                out, reps=5, queries=10, engines=("mzrtree",), verify_results=False
            )
        worst = 0.0
        for w in ("chrom", "spectra", "pep-small", "pep-large"):
            lo = reports[0.025].row("mzrtree", w).access_mean_s
            hi = reports[0.28].row("mzrtree", w).access_mean_s
            worst = max(worst, hi / lo)
            print(f"\n  {w}: 28% / 2.5% access ratio = {hi / lo:.2f}")
        assert worst <= 5.0, f"worst-workload growth {worst:.2f}x > 5x"
        # per-rep minimum: load is ~1 ms here and the mean picks up multi-ms
        # scheduler spikes unrelated to density (index files are identical
        # in size across the sweep)
        loads = [r.rows[0].load_min_s for r in reports.values()]
        spread = max(loads) / min(loads)
        print(f"  load spread across sweep = {spread:.2f}x")
        assert spread < 2.0


def test_criterion_7_ms_level_parity(tmp_path):
    """Equal-size MS1/MS2 stores behave alike and match the filtered oracle."""
    with criterion(7, "MS-level parity", 300):
        rows, cols, density = 400, 20000, 0.04
        res = 0.01
        ms1 = GenSpec(rows, 400.0, 400.0 + (cols - 1) * res, res, density,
                      GenMode.UNIFORM, seed=71, ms_level=1)
        ms2 = GenSpec(rows, 400.0, 400.0 + (cols - 1) * res, res, density,
                      GenMode.UNIFORM, seed=72, ms_level=2)
        recs1, recs2 = list(generate(ms1)), list(generate(ms2))
        mixed = tmp_path / "mixed.mzxml"
        emit_mzxml(interleave_levels(recs1, recs2), mixed, PeaksEncoding(64))
        stores = {}
        for level, spec in ((1, ms1), (2, ms2)):
            out = tmp_path / f"lvl{level}"
            build_store_from_mzxml(
                mixed, out, mz_min=spec.mz_min, mz_max=spec.mz_max,
                resolution=res, ms_level=level, k=20,
            )
            stores[level] = out
        # contents equal the level-filtered brute-force oracle
        rng = np.random.default_rng(7007)
        grid_meta = ms1.meta()
        for level, records in ((1, recs1), (2, recs2)):
            matrix = dense_matrix(records, grid_meta)
            with Store.open(stores[level]) as store:
                assert store.manifest.nnz == int(np.count_nonzero(matrix))
                for _ in range(40):
                    a, b = sorted(rng.integers(-1, rows, size=2))
                    c, d = sorted(rng.integers(-1, cols, size=2))
                    rect = QueryRect(int(a), int(b), int(c), int(d))
                    got = range_query(store, rect)
                    er, ec, ei = matrix_scan(matrix, rect)
                    assert np.array_equal(got.rows, er)
                    assert np.array_equal(got.cols, ec)
                    assert np.array_equal(got.intensities, ei)
        r1 = run_bench(stores[1], reps=5, queries=10, engines=("mzrtree",),
                       verify_results=False)
        r2 = run_bench(stores[2], reps=5, queries=10, engines=("mzrtree",),
                       verify_results=False)
        for w in ("chrom", "spectra", "pep-small", "pep-large"):
            a = r1.row("mzrtree", w).access_mean_s
            b = r2.row("mzrtree", w).access_mean_s
            ratio = max(a, b) / min(a, b)
            print(f"\n  {w}: MS1 {a * 1e3:.2f}ms vs MS2 {b * 1e3:.2f}ms "
                  f"(ratio {ratio:.2f})")
            assert ratio < 2.0


def test_criterion_8_ingestion_fidelity(tmp_path):
    """emit -> parse -> build -> query preserves counts and intensity mass."""
    with criterion(8, "ingestion fidelity", 120):
        import math as _math

        rows, cols, density, res = 150, 20000, 0.05, 0.01
        spec = _spec(rows, cols, density, GenMode.UNIFORM, seed=88)
        records = list(generate(spec))
        nnz = sum(r.mz.size for r in records)
        exact_total = _math.fsum(
            v for r in records for v in r.intensity.tolist()
        )
        for bits, tol in ((64, 0.0), (32, 1e-3)):
            path = tmp_path / f"f{bits}.mzxml"
            emit_mzxml(records, path, PeaksEncoding(precision=bits))
            out = tmp_path / f"store{bits}"
            build_store_from_mzxml(
                path, out, mz_min=spec.mz_min, mz_max=spec.mz_max,
                resolution=res, k=10, intensity_bits=bits,
            )
            with Store.open(out) as store:
                assert store.manifest.nnz == nnz
                result = range_query(store, QueryRect.full(store.meta))
                assert len(result) == nnz
                total = _math.fsum(result.intensities.astype(np.float64).tolist())
                if bits == 64:
                    assert total == exact_total
                else:
                    assert abs(total - exact_total) <= tol * exact_total
