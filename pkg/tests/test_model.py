import pytest
from hypothesis import given, strategies as st

from mzrtree.errors import GridRangeError
from mzrtree.model import (
    DatasetMeta,
    QueryRect,
    col_of_mz,
    density,
    mz_of_col,
    query_rect_from_physical,
)
from mzrtree.oracle import dense_matrix, matrix_scan

from conftest import make_meta, random_records


class TestColOfMz:
    def test_origin(self):
        meta = make_meta(cols=100, resolution=0.001, mz_min=400.0)
        assert col_of_mz(400.0, meta) == 0

    def test_rounds_to_nearest(self):
        meta = make_meta(cols=100, resolution=0.001, mz_min=400.0)
        assert col_of_mz(400.0014, meta) == 1

    def test_full_span(self):
        meta = DatasetMeta(
            mz_min=400.0, mz_max=1800.0, resolution=0.001, rt_axis=(1.0,)
        )
        assert meta.cols == 1400001
        assert col_of_mz(1800.0, meta) == 1400000

    def test_out_of_range_names_value(self):
        meta = make_meta(cols=100)
        with pytest.raises(GridRangeError, match="399.5"):
            col_of_mz(399.5, meta)

    @given(st.integers(min_value=0, max_value=99_999))
    def test_inverse_grid_map(self, c):
        meta = make_meta(cols=100_000, resolution=0.001)
        assert col_of_mz(mz_of_col(c, meta), meta) == c

    @given(st.lists(st.floats(min_value=400.0, max_value=499.0), min_size=2, max_size=20))
    def test_monotone(self, values):
        meta = make_meta(cols=100_000, resolution=0.001)
        values.sort()
        cols = [col_of_mz(v, meta) for v in values]
        assert cols == sorted(cols)


class TestDensity:
    def test_quarter(self):
        meta = make_meta(rows=2, cols=2, resolution=1.0)
        assert density(1, meta) == 0.25

    def test_empty(self):
        meta = make_meta(rows=5, cols=7, resolution=1.0)
        assert density(0, meta) == 0.0

    def test_survey_scale_grid(self):
        # 2130 x 1400001 grid from a 400-1800 Da range at 0.001 Da
        meta = DatasetMeta(
            mz_min=400.0,
            mz_max=1800.0,
            resolution=0.001,
            rt_axis=tuple(float(i) for i in range(1, 2131)),
        )
        nnz = round(0.025 * meta.rows * meta.cols)
        assert density(nnz, meta) * 100 == pytest.approx(2.50, abs=1e-6)

    def test_permutation_invariant(self, rng):
        meta = make_meta(rows=8, cols=50, resolution=0.01)
        records = random_records(rng, meta, 0.2)
        nnz = sum(r.mz.size for r in records)
        shuffled = list(records)
        rng.shuffle(shuffled)
        assert density(nnz, meta) == density(sum(r.mz.size for r in shuffled), meta)

    def test_over_capacity_rejected(self):
        meta = make_meta(rows=2, cols=2, resolution=1.0)
        with pytest.raises(ValueError):
            density(5, meta)


class TestQueryRect:
    def test_validation(self):
        with pytest.raises(ValueError):
            QueryRect(5, 4, 0, 1)

    def test_empty_sentinel(self):
        assert QueryRect.empty().is_empty
        assert QueryRect(3, 3, 0, 10).is_empty

    def test_full_covers_all(self):
        meta = make_meta(rows=4, cols=10, resolution=1.0)
        rect = QueryRect.full(meta)
        assert all(rect.contains(r, c) for r in range(4) for c in range(10))

    def test_half_open_semantics(self):
        rect = QueryRect(2, 5, 10, 20)
        assert not rect.contains(2, 15)
        assert rect.contains(3, 15)
        assert rect.contains(5, 20)
        assert not rect.contains(5, 21)
        assert not rect.contains(4, 10)


class TestPhysicalRect:
    def test_full_extent(self):
        meta = make_meta(rows=5, cols=1000, resolution=0.01, mz_min=400.0)
        rect = query_rect_from_physical(0.0, 100.0, 0.0, 1e9, meta)
        assert (rect.rt1, rect.rt2) == (-1, 4)
        assert (rect.mz1, rect.mz2) == (-1, 999)

    def test_five_da_window_is_5000_columns(self):
        meta = DatasetMeta(
            mz_min=400.0, mz_max=1800.0, resolution=0.001, rt_axis=(1.0, 2.0)
        )
        rect = query_rect_from_physical(0.0, 10.0, 500.0, 505.0, meta)
        assert rect.mz2 - rect.mz1 == 5000

    def test_rt_gap_gives_empty(self):
        meta = make_meta(rows=3, cols=10, resolution=1.0, rt_axis=(10.0, 20.0, 30.0))
        rect = query_rect_from_physical(12.0, 18.0, 0.0, 1e9, meta)
        assert rect.is_empty

    def test_rt_bounds_are_half_open(self):
        meta = make_meta(rows=3, cols=10, resolution=1.0, rt_axis=(10.0, 20.0, 30.0))
        rect = query_rect_from_physical(10.0, 20.0, 0.0, 1e9, meta)
        assert (rect.row_lo, rect.row_hi) == (1, 1)


def test_disjoint_tiling_partitions_entries(rng):
    """Tiles of any grid partition of the extent see each entry exactly once."""
    meta = make_meta(rows=12, cols=300, resolution=0.01)
    records = random_records(rng, meta, 0.1)
    matrix = dense_matrix(records, meta)
    total_rows, total_cols, _ = matrix_scan(matrix, QueryRect.full(meta))
    row_cuts = [-1, 3, 7, meta.rows - 1]
    col_cuts = [-1, 50, 51, 200, meta.cols - 1]
    seen = []
    for r1, r2 in zip(row_cuts, row_cuts[1:]):
        for c1, c2 in zip(col_cuts, col_cuts[1:]):
            rows, cols, _ = matrix_scan(matrix, QueryRect(r1, r2, c1, c2))
            seen.extend(zip(rows.tolist(), cols.tolist()))
    assert sorted(seen) == sorted(zip(total_rows.tolist(), total_cols.tolist()))
