import numpy as np
import pytest

from mzrtree.errors import ConsistencyError
from mzrtree.model import QueryRect
from mzrtree.oracle import dense_matrix, matrix_scan
from mzrtree.query import (
    PeptideSize,
    chromatogram,
    peptide_query,
    peptide_rect,
    range_query,
    spectrum_block,
)
from mzrtree.storage import Store

from conftest import build_from_records, make_meta, random_records


@pytest.fixture
def small_store(rng, tmp_path):
    meta = make_meta(rows=40, cols=4000, resolution=0.01, mz_min=400.0)
    records = random_records(rng, meta, 0.04)
    store = build_from_records(records, meta, tmp_path / "s", k=5)
    matrix = dense_matrix(records, meta)
    yield store, matrix
    store.close()


def assert_matches_oracle(result, matrix, rect):
    er, ec, ei = matrix_scan(matrix, rect)
    assert np.array_equal(result.rows, er)
    assert np.array_equal(result.cols, ec)
    assert np.array_equal(result.intensities, ei)


class TestRangeQuery:
    def test_full_extent_returns_all(self, small_store):
        store, matrix = small_store
        result = range_query(store, QueryRect.full(store.meta))
        assert len(result) == store.manifest.nnz
        assert_matches_oracle(result, matrix, QueryRect.full(store.meta))

    def test_empty_sentinel_reads_nothing(self, small_store):
        store, _ = small_store
        result = range_query(store, QueryRect.empty())
        assert len(result) == 0
        assert result.stats.bbs_touched == 0
        assert result.stats.bytes_read == 0

    def test_random_rects_match_oracle(self, small_store, rng):
        store, matrix = small_store
        meta = store.meta
        for _ in range(150):
            a, b = sorted(rng.integers(-1, meta.rows, size=2))
            c, d = sorted(rng.integers(-1, meta.cols, size=2))
            rect = QueryRect(int(a), int(b), int(c), int(d))
            assert_matches_oracle(range_query(store, rect), matrix, rect)

    def test_results_strictly_sorted(self, small_store):
        store, _ = small_store
        result = range_query(store, QueryRect.full(store.meta))
        keys = result.rows * store.meta.cols + result.cols
        assert np.all(np.diff(keys) > 0)

    def test_monotone_in_rect_growth(self, small_store, rng):
        store, _ = small_store
        meta = store.meta
        for _ in range(20):
            a, b = sorted(rng.integers(-1, meta.rows, size=2))
            c, d = sorted(rng.integers(-1, meta.cols, size=2))
            inner = QueryRect(int(a), int(b), int(c), int(d))
            outer = QueryRect(
                max(int(a) - 3, -1), min(int(b) + 3, meta.rows - 1),
                max(int(c) - 40, -1), min(int(d) + 40, meta.cols - 1),
            )
            small = range_query(store, inner)
            big = range_query(store, outer)
            inner_set = set(zip(small.rows.tolist(), small.cols.tolist()))
            outer_set = set(zip(big.rows.tolist(), big.cols.tolist()))
            assert inner_set <= outer_set

    def test_end_to_end_tiling_partition(self, small_store):
        store, _ = small_store
        meta = store.meta
        full = range_query(store, QueryRect.full(meta))
        row_cuts = [-1, 10, 11, 25, meta.rows - 1]
        col_cuts = [-1, 999, 2500, meta.cols - 1]
        seen = []
        for r1, r2 in zip(row_cuts, row_cuts[1:]):
            for c1, c2 in zip(col_cuts, col_cuts[1:]):
                part = range_query(store, QueryRect(r1, r2, c1, c2))
                seen.extend(zip(part.rows.tolist(), part.cols.tolist()))
        assert sorted(seen) == list(zip(full.rows.tolist(), full.cols.tolist()))

    def test_stats_consistency(self, small_store):
        store, _ = small_store
        result = range_query(store, QueryRect(5, 20, 100, 2000))
        w = store.manifest.index_params["w"]
        assert 0 < result.stats.bbs_touched <= w
        assert result.stats.bytes_read > 0
        assert result.stats.elapsed_s > 0


class TestWorkloadSugar:
    def test_chromatogram_equals_range_query(self, small_store):
        store, matrix = small_store
        result = chromatogram(store, 410.0, 415.0)
        from mzrtree.model import query_rect_from_physical

        rect = query_rect_from_physical(
            float("-inf"), float("inf"), 410.0, 415.0, store.meta
        )
        assert_matches_oracle(result, matrix, rect)
        assert rect.mz2 - rect.mz1 == 500  # 5 Da at 0.01 Da per column

    def test_chromatogram_empty_region(self, rng, tmp_path):
        meta = make_meta(rows=10, cols=2000, resolution=0.01, mz_min=400.0)
        records = random_records(rng, meta, 0.01)
        # clear a band
        for rec in records:
            keep = (rec.mz < 405.0) | (rec.mz > 407.0)
            object.__setattr__(rec, "mz", rec.mz[keep])
            object.__setattr__(rec, "intensity", rec.intensity[keep])
        store = build_from_records(records, meta, tmp_path / "s", k=2)
        assert len(chromatogram(store, 405.2, 406.8)) == 0
        store.close()

    def test_spectrum_block_equals_range_query(self, small_store):
        store, matrix = small_store
        result = spectrum_block(store, 10)
        rect = QueryRect(9, 29, -1, store.meta.cols - 1)
        assert_matches_oracle(result, matrix, rect)

    def test_spectrum_block_clipped_at_end(self, small_store):
        store, matrix = small_store
        result = spectrum_block(store, 35, 20)
        rect = QueryRect(34, 39, -1, store.meta.cols - 1)
        assert_matches_oracle(result, matrix, rect)

    def test_peptide_small_spans_60_rows(self):
        meta = make_meta(rows=500, cols=4000, resolution=0.01, mz_min=400.0)
        rect = peptide_rect(meta, 420.0, 250, PeptideSize.SMALL)
        assert rect.rt2 - rect.rt1 == 60

    def test_peptide_large_spans_200_rows(self):
        meta = make_meta(rows=500, cols=4000, resolution=0.01, mz_min=400.0)
        rect = peptide_rect(meta, 420.0, 250, PeptideSize.LARGE)
        assert rect.rt2 - rect.rt1 == 200

    def test_peptide_clipped_at_row_zero(self, small_store):
        store, matrix = small_store
        result = peptide_query(store, 420.0, 0, PeptideSize.SMALL)
        rect = peptide_rect(store.meta, 420.0, 0, PeptideSize.SMALL)
        assert rect.rt1 == -1
        assert_matches_oracle(result, matrix, rect)

    def test_peptide_equals_range_query(self, small_store):
        store, matrix = small_store
        result = peptide_query(store, 415.0, 20, PeptideSize.SMALL)
        rect = peptide_rect(store.meta, 415.0, 20, PeptideSize.SMALL)
        assert_matches_oracle(result, matrix, rect)


class TestConsistency:
    def test_tampered_index_rejected(self, rng, tmp_path):
        meta = make_meta(rows=10, cols=2000, resolution=0.01)
        records = random_records(rng, meta, 0.02)
        store = build_from_records(records, meta, tmp_path / "s", k=2)
        store.close()
        index_path = tmp_path / "s" / "index.bin"
        data = bytearray(index_path.read_bytes())
        data[30] ^= 0xFF
        index_path.write_bytes(bytes(data))
        with pytest.raises(ConsistencyError):
            Store.open(tmp_path / "s")

    def test_index_from_other_build_rejected(self, rng, tmp_path):
        meta = make_meta(rows=10, cols=2000, resolution=0.01)
        store_a = build_from_records(
            random_records(rng, meta, 0.02), meta, tmp_path / "a", k=2
        )
        store_b = build_from_records(
            random_records(rng, meta, 0.03), meta, tmp_path / "b", k=2
        )
        store_a.close()
        store_b.close()
        (tmp_path / "a" / "index.bin").write_bytes(
            (tmp_path / "b" / "index.bin").read_bytes()
        )
        with pytest.raises(ConsistencyError):
            Store.open(tmp_path / "a")

    def test_missing_strip_rejected(self, rng, tmp_path):
        meta = make_meta(rows=10, cols=2000, resolution=0.01)
        store = build_from_records(
            random_records(rng, meta, 0.02), meta, tmp_path / "s", k=3
        )
        store.close()
        (tmp_path / "s" / "strip_1.bin").unlink()
        with pytest.raises(ConsistencyError):
            Store.open(tmp_path / "s")


def test_concurrent_readers_agree(small_store):
    from concurrent.futures import ThreadPoolExecutor

    store, matrix = small_store
    meta = store.meta
    rects = [
        QueryRect(-1, meta.rows - 1, i * 400 - 1, (i + 1) * 400 - 1) for i in range(10)
    ]
    serial = [range_query(store, r) for r in rects]
    with ThreadPoolExecutor(max_workers=8) as pool:
        parallel = list(pool.map(lambda r: range_query(store, r), rects))
    for got, want in zip(parallel, serial):
        assert np.array_equal(got.rows, want.rows)
        assert np.array_equal(got.intensities, want.intensities)
