"""Grid model: dataset geometry, coordinate conversion, and query rectangles.

A dataset is viewed as a matrix whose rows are spectra (ordered by retention
time) and whose columns are a fixed m/z grid at `resolution` Da per column.
Query rectangles use half-open bounds on both axes: an entry at (row, col)
matches when ``rt1 < row <= rt2`` and ``mz1 < col <= mz2``.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .errors import GridRangeError

DEFAULT_BB_WIDTH_DA = 5.0


@dataclass(frozen=True)
class DatasetMeta:
    """Geometry of one dataset: m/z grid, retention-time axis, and layout knobs."""

    mz_min: float
    mz_max: float
    resolution: float
    rt_axis: tuple[float, ...]
    ms_level: int = 1
    strip_count: int = 1
    bb_width_cols: int = 0
    intensity_bits: int = 32

    def __post_init__(self):
        if not self.mz_min < self.mz_max:
            raise ValueError(f"mz_min {self.mz_min} must be < mz_max {self.mz_max}")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.ms_level < 1:
            raise ValueError("ms_level must be >= 1")
        rts = tuple(float(t) for t in self.rt_axis)
        object.__setattr__(self, "rt_axis", rts)
        if len(rts) == 0:
            raise ValueError("rt_axis must not be empty")
        if any(b < a for a, b in zip(rts, rts[1:])):
            raise ValueError("rt_axis must be nondecreasing")
        if not 1 <= self.strip_count <= len(rts):
            raise ValueError(f"strip_count must be in [1, {len(rts)}]")
        if self.bb_width_cols == 0:
            object.__setattr__(
                self, "bb_width_cols", round(DEFAULT_BB_WIDTH_DA / self.resolution)
            )
        if self.bb_width_cols < 1:
            raise ValueError("bb_width_cols must be >= 1")
        if self.intensity_bits not in (32, 64):
            raise ValueError("intensity_bits must be 32 or 64")

    @property
    def rows(self) -> int:
        return len(self.rt_axis)

    @property
    def cols(self) -> int:
        return math.floor((self.mz_max - self.mz_min) / self.resolution) + 1

    @property
    def cells(self) -> int:
        return self.rows * self.cols

    @property
    def intensity_dtype(self) -> np.dtype:
        return np.dtype("<f4" if self.intensity_bits == 32 else "<f8")


@dataclass(frozen=True)
class PeakEntry:
    """One nonzero matrix entry."""

    row: int
    col: int
    intensity: float


@dataclass(frozen=True)
class SpectrumRecord:
    """One spectrum: retention time plus m/z-sorted peak arrays."""

    rt: float
    ms_level: int
    mz: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mz", np.asarray(self.mz, dtype=np.float64))
        object.__setattr__(
            self, "intensity", np.asarray(self.intensity, dtype=np.float64)
        )
        if self.mz.shape != self.intensity.shape:
            raise ValueError("mz and intensity arrays must have equal length")

    @property
    def peaks(self) -> list[tuple[float, float]]:
        return list(zip(self.mz.tolist(), self.intensity.tolist()))


@dataclass(frozen=True)
class QueryRect:
    """Half-open query rectangle in grid coordinates.

    Matches entries with rt1 < row <= rt2 and mz1 < col <= mz2, so a bound of
    -1 includes row/column 0. A rect with rt1 == rt2 or mz1 == mz2 is empty.
    """

    rt1: int
    rt2: int
    mz1: int
    mz2: int

    def __post_init__(self):
        if self.rt1 > self.rt2 or self.mz1 > self.mz2:
            raise ValueError(f"degenerate rect {self}")

    @property
    def is_empty(self) -> bool:
        return self.rt1 == self.rt2 or self.mz1 == self.mz2

    @property
    def row_lo(self) -> int:
        """Smallest matching row (closed bound)."""
        return self.rt1 + 1

    @property
    def row_hi(self) -> int:
        return self.rt2

    @property
    def col_lo(self) -> int:
        return self.mz1 + 1

    @property
    def col_hi(self) -> int:
        return self.mz2

    @classmethod
    def empty(cls) -> "QueryRect":
        return cls(0, 0, 0, 0)

    @classmethod
    def full(cls, meta: DatasetMeta) -> "QueryRect":
        return cls(-1, meta.rows - 1, -1, meta.cols - 1)

    def contains(self, row: int, col: int) -> bool:
        return self.rt1 < row <= self.rt2 and self.mz1 < col <= self.mz2

    def clipped(self, meta: DatasetMeta) -> "QueryRect":
        """Intersect with the dataset extent; empty sentinel when disjoint."""
        rt1 = max(self.rt1, -1)
        rt2 = min(self.rt2, meta.rows - 1)
        mz1 = max(self.mz1, -1)
        mz2 = min(self.mz2, meta.cols - 1)
        if rt1 >= rt2 or mz1 >= mz2:
            return QueryRect.empty()
        return QueryRect(rt1, rt2, mz1, mz2)


def col_of_mz(mz: float, meta: DatasetMeta) -> int:
    """Snap a physical m/z value to its grid column (nearest, half rounds up)."""
    if not meta.mz_min <= mz <= meta.mz_max:
        raise GridRangeError(
            f"m/z {mz!r} outside dataset range [{meta.mz_min}, {meta.mz_max}]"
        )
    return int(math.floor((mz - meta.mz_min) / meta.resolution + 0.5))


def cols_of_mz(mz: np.ndarray, meta: DatasetMeta) -> np.ndarray:
    """Vectorized col_of_mz; caller is responsible for range filtering."""
    return np.floor((mz - meta.mz_min) / meta.resolution + 0.5).astype(np.int64)


def mz_of_col(col: int, meta: DatasetMeta) -> float:
    """Inverse grid map: the physical m/z of a column's grid point."""
    return meta.mz_min + col * meta.resolution


def density(nnz: int, meta: DatasetMeta) -> float:
    """Fraction of grid cells holding a nonzero intensity."""
    if nnz < 0 or nnz > meta.cells:
        raise ValueError(f"nnz {nnz} outside [0, {meta.cells}]")
    return nnz / meta.cells


# Follows the half-open matching convention on physical values too: a bound
# exactly on a grid point excludes that point at the low edge and includes it
# at the high edge. The epsilon absorbs float noise from mz_of_col round trips.
_GRID_EPS = 1e-9


def query_rect_from_physical(
    rt_lo: float, rt_hi: float, mz_lo: float, mz_hi: float, meta: DatasetMeta
) -> QueryRect:
    """Largest grid rect whose rows/cols fall in (rt_lo, rt_hi] x (mz_lo, mz_hi]."""
    lo_row = bisect_right(meta.rt_axis, rt_lo)
    hi_row = bisect_right(meta.rt_axis, rt_hi) - 1
    lo_col = math.floor((mz_lo - meta.mz_min) / meta.resolution + _GRID_EPS) + 1
    hi_col = math.floor((mz_hi - meta.mz_min) / meta.resolution + _GRID_EPS)
    lo_col = max(lo_col, 0)
    hi_col = min(hi_col, meta.cols - 1)
    if lo_row > hi_row or lo_col > hi_col:
        return QueryRect.empty()
    return QueryRect(lo_row - 1, hi_row, lo_col - 1, hi_col)
