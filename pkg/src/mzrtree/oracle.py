"""Brute-force reference: a dense matrix scan that any engine must agree with.

Only usable at desk scale (the matrix is materialized), which is the point:
it is simple enough to trust.
"""

from __future__ import annotations

import numpy as np

from .model import DatasetMeta, QueryRect
from .mzxml import IngestStats, snap_to_grid


def dense_matrix(records, meta: DatasetMeta) -> np.ndarray:
    """Materialize spectra as a rows x cols float64 matrix (collisions summed)."""
    matrix = np.zeros((meta.rows, meta.cols), dtype=np.float64)
    stats = IngestStats()
    for row, record in enumerate(records):
        cols, inten = snap_to_grid(record, meta, stats)
        matrix[row, cols] += inten
    return matrix


def matrix_scan(
    matrix: np.ndarray, rect: QueryRect, intensity_dtype=np.float32
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nonzero entries of matrix inside rect, sorted by (row, col).

    Intensities are cast to the store's width so comparisons against an
    engine are exact.
    """
    if rect.is_empty:
        return (
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=intensity_dtype),
        )
    r0 = max(rect.row_lo, 0)
    r1 = min(rect.row_hi, matrix.shape[0] - 1)
    c0 = max(rect.col_lo, 0)
    c1 = min(rect.col_hi, matrix.shape[1] - 1)
    if r0 > r1 or c0 > c1:
        return (
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=intensity_dtype),
        )
    sub = matrix[r0 : r1 + 1, c0 : c1 + 1]
    rows, cols = np.nonzero(sub)
    values = sub[rows, cols].astype(intensity_dtype)
    return rows.astype(np.int64) + r0, cols.astype(np.int64) + c0, values
