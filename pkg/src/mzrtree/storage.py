"""On-disk strip/bounding-box layout.

A store directory holds one binary file per strip of consecutive rows, an
index file, and a human-readable manifest. Each strip file starts with an
8-byte magic and a u16 format version, followed by back-to-back bounding-box
records. A record is:

    u32 top_rt, u32 bottom_rt, u32 left_mz, u32 right_mz   tight coordinates
    u8  repr (0 sparse, 1 dense), u8 intensity width (4|8)
    u32 nnz, u32 payload length
    payload bytes
    u32 CRC32 over header + payload

Dense payload: row-major intensities over the tight rectangle.
Sparse payload: u32 row count, then per nonempty row a u32 row offset from
top_rt, a u32 entry count, and that many (u32 col offset from left_mz,
intensity) pairs. All integers little-endian, intensities IEEE-754.
"""

from __future__ import annotations

import json
import math
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, CorruptionError
from .model import DatasetMeta, QueryRect

STRIP_MAGIC = b"MZRTSTRP"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
INDEX_NAME = "index.bin"

_HEADER = struct.Struct("<IIIIBBII")
_CRC = struct.Struct("<I")
STRIP_PREAMBLE = len(STRIP_MAGIC) + 2
BB_HEADER_BYTES = _HEADER.size
BB_RECORD_OVERHEAD = _HEADER.size + _CRC.size

# rough in-memory bytes per nonzero entry while a strip is being assembled
ENTRY_FOOTPRINT_BYTES = 16


@dataclass
class BoundingBox:
    """One tile's nonzero entries with tight coordinates and a payload.

    Sparse payloads keep (rows, cols, intensities) arrays in absolute grid
    coordinates, sorted row-major. Dense payloads keep the full tight-rect
    grid including zeros.
    """

    top_rt: int
    bottom_rt: int
    left_mz: int
    right_mz: int
    dense: bool
    nnz: int
    intensity_bits: int = 32
    grid: np.ndarray | None = None
    rows: np.ndarray | None = None
    cols: np.ndarray | None = None
    intensities: np.ndarray | None = None

    @property
    def cells(self) -> int:
        return (self.bottom_rt - self.top_rt + 1) * (self.right_mz - self.left_mz + 1)

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All nonzero entries as (rows, cols, intensities), row-major order."""
        if self.dense:
            r, c = np.nonzero(self.grid)
            return (
                (r + self.top_rt).astype(np.int64),
                (c + self.left_mz).astype(np.int64),
                self.grid[r, c],
            )
        return self.rows.astype(np.int64), self.cols.astype(np.int64), self.intensities

    def scan(self, rect: QueryRect) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Entries inside rect, half-open semantics, sorted by (row, col)."""
        empty = (
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=self.intensity_dtype),
        )
        if rect.is_empty:
            return empty
        if (
            rect.row_hi < self.top_rt
            or rect.row_lo > self.bottom_rt
            or rect.col_hi < self.left_mz
            or rect.col_lo > self.right_mz
        ):
            return empty
        if self.dense:
            r0 = max(rect.row_lo - self.top_rt, 0)
            r1 = min(rect.row_hi - self.top_rt, self.grid.shape[0] - 1)
            c0 = max(rect.col_lo - self.left_mz, 0)
            c1 = min(rect.col_hi - self.left_mz, self.grid.shape[1] - 1)
            sub = self.grid[r0 : r1 + 1, c0 : c1 + 1]
            r, c = sub.nonzero()
            vals = sub[r, c]
            r += r0 + self.top_rt
            c += c0 + self.left_mz
            return r, c, vals
        rows, cols, inten = self.rows, self.cols, self.intensities
        # rows are stored nondecreasing; slice the row band first
        lo = np.searchsorted(rows, rect.row_lo, side="left")
        hi = np.searchsorted(rows, rect.row_hi, side="right")
        rows, cols, inten = rows[lo:hi], cols[lo:hi], inten[lo:hi]
        if rect.col_lo > self.left_mz or rect.col_hi < self.right_mz:
            keep = (cols >= rect.col_lo) & (cols <= rect.col_hi)
            rows, cols, inten = rows[keep], cols[keep], inten[keep]
        return rows, cols, inten

    @property
    def intensity_dtype(self) -> np.dtype:
        return np.dtype("<f4" if self.intensity_bits == 32 else "<f8")


def dense_rule(nnz: int, cells: int) -> bool:
    """Dense when half or more of the tight rectangle's cells are nonzero."""
    return nnz >= math.ceil(cells / 2)


def plan_strips(rows: int, k: int) -> list[tuple[int, int]]:
    """Split [0, rows) into k contiguous half-open ranges, earlier ones larger."""
    if not 1 <= k <= rows:
        raise ValueError(f"strip count {k} must be in [1, {rows}]")
    base, extra = divmod(rows, k)
    ranges = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        ranges.append((start, start + size))
        start += size
    return ranges


def estimate_strip_bytes(strip_rows: int, cols: int, est_density: float) -> int:
    """In-memory footprint estimate for one strip during build."""
    return math.ceil(est_density * strip_rows * cols) * ENTRY_FOOTPRINT_BYTES


def choose_k(rows: int, cols: int, est_density: float, ram_budget_bytes: int) -> int:
    """Smallest strip count whose estimated strip footprint fits the budget."""
    if ram_budget_bytes <= 0:
        raise ValueError("ram_budget_bytes must be positive")
    for k in range(1, rows + 1):
        strip_rows = math.ceil(rows / k)
        if estimate_strip_bytes(strip_rows, cols, est_density) <= ram_budget_bytes:
            return k
    return rows


def build_bbs(
    strip_rows: list[tuple[int, np.ndarray, np.ndarray]],
    meta: DatasetMeta,
) -> list[BoundingBox]:
    """Tile one strip's gridded rows into bounding boxes.

    `strip_rows` holds (absolute row, cols array, intensities array) per row,
    cols sorted ascending within each row. Emits one BB per fixed-width column
    slice that contains at least one entry, in increasing slice order.
    """
    width = meta.bb_width_cols
    parts_r, parts_c, parts_i = [], [], []
    for row, cols, inten in strip_rows:
        if len(cols) == 0:
            continue
        parts_r.append(np.full(len(cols), row, dtype=np.int64))
        parts_c.append(np.asarray(cols, dtype=np.int64))
        parts_i.append(np.asarray(inten, dtype=np.float64))
    if not parts_r:
        return []
    rows = np.concatenate(parts_r)
    cols = np.concatenate(parts_c)
    inten = np.concatenate(parts_i)
    tiles = cols // width
    # row-major within each tile; inputs are already row-ordered per strip
    order = np.lexsort((cols, rows, tiles))
    rows, cols, inten, tiles = rows[order], cols[order], inten[order], tiles[order]
    boundaries = np.flatnonzero(np.diff(tiles)) + 1
    out = []
    for lo, hi in zip(
        np.concatenate(([0], boundaries)), np.concatenate((boundaries, [len(tiles)]))
    ):
        out.append(_make_bb(rows[lo:hi], cols[lo:hi], inten[lo:hi], meta))
    return out


def _make_bb(rows, cols, inten, meta: DatasetMeta) -> BoundingBox:
    top, bottom = int(rows[0]), int(rows[-1])
    left, right = int(cols.min()), int(cols.max())
    nnz = len(rows)
    cells = (bottom - top + 1) * (right - left + 1)
    dtype = meta.intensity_dtype
    if dense_rule(nnz, cells):
        grid = np.zeros((bottom - top + 1, right - left + 1), dtype=dtype)
        grid[rows - top, cols - left] = inten
        return BoundingBox(
            top, bottom, left, right, True, nnz, meta.intensity_bits, grid=grid
        )
    return BoundingBox(
        top,
        bottom,
        left,
        right,
        False,
        nnz,
        meta.intensity_bits,
        rows=rows,
        cols=cols,
        intensities=inten.astype(dtype),
    )


def serialize_bb(bb: BoundingBox) -> bytes:
    """One self-checking record: header, payload, CRC32."""
    iw = bb.intensity_bits // 8
    if bb.dense:
        payload = np.ascontiguousarray(bb.grid, dtype=bb.intensity_dtype).tobytes()
    else:
        rel_rows = (bb.rows - bb.top_rt).astype(np.uint32)
        rel_cols = (bb.cols - bb.left_mz).astype(np.uint32)
        inten = bb.intensities.astype(bb.intensity_dtype)
        uniq, starts = np.unique(rel_rows, return_index=True)
        ends = np.append(starts[1:], len(rel_rows))
        pair_dt = np.dtype([("c", "<u4"), ("i", bb.intensity_dtype)])
        chunks = [struct.pack("<I", len(uniq))]
        for r, lo, hi in zip(uniq, starts, ends):
            chunks.append(struct.pack("<II", int(r), int(hi - lo)))
            pairs = np.empty(hi - lo, dtype=pair_dt)
            pairs["c"] = rel_cols[lo:hi]
            pairs["i"] = inten[lo:hi]
            chunks.append(pairs.tobytes())
        payload = b"".join(chunks)
    header = _HEADER.pack(
        bb.top_rt,
        bb.bottom_rt,
        bb.left_mz,
        bb.right_mz,
        1 if bb.dense else 0,
        iw,
        bb.nnz,
        len(payload),
    )
    return header + payload + _CRC.pack(zlib.crc32(header + payload))


def deserialize_bb(data: bytes, offset: int = 0) -> tuple[BoundingBox, int]:
    """Parse one record at `offset`; returns (bb, bytes consumed)."""
    end = offset + _HEADER.size
    if end > len(data):
        raise CorruptionError(f"truncated record header at offset {offset}")
    top, bottom, left, right, repr_flag, iw, nnz, plen = _HEADER.unpack_from(
        data, offset
    )
    if repr_flag not in (0, 1) or iw not in (4, 8) or top > bottom or left > right:
        raise CorruptionError(f"invalid record header at offset {offset}")
    total = _HEADER.size + plen + _CRC.size
    if offset + total > len(data):
        raise CorruptionError(f"truncated record payload at offset {offset}")
    (stored_crc,) = _CRC.unpack_from(data, offset + _HEADER.size + plen)
    actual = zlib.crc32(data[offset : offset + _HEADER.size + plen])
    if stored_crc != actual:
        raise CorruptionError(f"CRC mismatch for record at offset {offset}")
    payload = data[offset + _HEADER.size : offset + _HEADER.size + plen]
    bits = iw * 8
    dtype = np.dtype("<f4" if iw == 4 else "<f8")
    if repr_flag == 1:
        shape = (bottom - top + 1, right - left + 1)
        if plen != shape[0] * shape[1] * iw:
            raise CorruptionError(f"dense payload size mismatch at offset {offset}")
        grid = np.frombuffer(payload, dtype=dtype).reshape(shape)
        bb = BoundingBox(top, bottom, left, right, True, nnz, bits, grid=grid)
    else:
        rows, cols, inten = _deserialize_sparse(payload, top, left, nnz, dtype, offset)
        bb = BoundingBox(
            top, bottom, left, right, False, nnz, bits,
            rows=rows, cols=cols, intensities=inten,
        )
    return bb, total


def _deserialize_sparse(payload, top, left, nnz, dtype, offset):
    pair_dt = np.dtype([("c", "<u4"), ("i", dtype)])
    pair_size = pair_dt.itemsize
    try:
        (nrows,) = struct.unpack_from("<I", payload, 0)
        pos = 4
        row_ids = np.empty(nrows, dtype=np.int64)
        counts = np.empty(nrows, dtype=np.int64)
        parts = []
        for j in range(nrows):
            r, count = struct.unpack_from("<II", payload, pos)
            pos += 8
            row_ids[j] = r
            counts[j] = count
            parts.append(payload[pos : pos + count * pair_size])
            pos += count * pair_size
        if pos != len(payload) or int(counts.sum()) != nnz:
            raise CorruptionError(f"sparse payload framing mismatch at offset {offset}")
    except struct.error as exc:
        raise CorruptionError(f"sparse payload truncated at offset {offset}") from exc
    pairs = np.frombuffer(b"".join(parts), dtype=pair_dt)
    rows = np.repeat(row_ids + top, counts)
    cols = pairs["c"].astype(np.int64) + left
    return rows, cols, pairs["i"]


@dataclass
class StripInfo:
    """Manifest row for one strip file."""

    strip_id: int
    file: str
    row_lo: int
    row_hi: int
    bb_count: int
    bytes: int
    crc32: int


@dataclass
class StoreManifest:
    """Everything needed to open a store and check it is self-consistent."""

    format_version: int
    meta: DatasetMeta
    nnz: int
    strips: list[StripInfo]
    index_file: str
    index_bytes: int
    index_crc32: int
    index_params: dict
    census: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "format_version": self.format_version,
            "dataset": {
                "mz_min": self.meta.mz_min,
                "mz_max": self.meta.mz_max,
                "resolution": self.meta.resolution,
                "ms_level": self.meta.ms_level,
                "strip_count": self.meta.strip_count,
                "bb_width_cols": self.meta.bb_width_cols,
                "intensity_bits": self.meta.intensity_bits,
                "rt_axis": list(self.meta.rt_axis),
            },
            "nnz": self.nnz,
            "strips": [vars(s) for s in self.strips],
            "index": {
                "file": self.index_file,
                "bytes": self.index_bytes,
                "crc32": self.index_crc32,
                "params": self.index_params,
            },
            "census": self.census,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StoreManifest":
        doc = json.loads(text)
        d = doc["dataset"]
        meta = DatasetMeta(
            mz_min=d["mz_min"],
            mz_max=d["mz_max"],
            resolution=d["resolution"],
            rt_axis=tuple(d["rt_axis"]),
            ms_level=d["ms_level"],
            strip_count=d["strip_count"],
            bb_width_cols=d["bb_width_cols"],
            intensity_bits=d["intensity_bits"],
        )
        strips = [StripInfo(**s) for s in doc["strips"]]
        idx = doc["index"]
        return cls(
            format_version=doc["format_version"],
            meta=meta,
            nnz=doc["nnz"],
            strips=strips,
            index_file=idx["file"],
            index_bytes=idx["bytes"],
            index_crc32=idx["crc32"],
            index_params=idx["params"],
            census=doc.get("census", {}),
        )


class Store:
    """Read-only view of a built store directory.

    Opening loads the manifest and index only; strip files are touched through
    positioned reads, so concurrent readers can share one Store.
    """

    def __init__(self, path: Path, manifest: StoreManifest, index_root):
        self.path = Path(path)
        self.manifest = manifest
        self.meta = manifest.meta
        self.index_root = index_root
        self._fds: dict[int, int] = {}
        self._strip_sizes = [s.bytes for s in manifest.strips]

    @classmethod
    def open(cls, path: str | Path) -> "Store":
        from .index import load_index

        path = Path(path)
        manifest_path = path / MANIFEST_NAME
        if not manifest_path.exists():
            raise ConsistencyError(f"no {MANIFEST_NAME} in {path}")
        manifest = StoreManifest.from_json(manifest_path.read_text())
        for s in manifest.strips:
            f = path / s.file
            if not f.exists():
                raise ConsistencyError(f"missing strip file {s.file}")
            actual = f.stat().st_size
            if actual != s.bytes:
                raise ConsistencyError(
                    f"strip file {s.file}: size {actual} does not match manifest {s.bytes}"
                )
        index_bytes = (path / manifest.index_file).read_bytes()
        if len(index_bytes) != manifest.index_bytes or (
            zlib.crc32(index_bytes[:-4]) != manifest.index_crc32
        ):
            raise ConsistencyError(
                "index file does not match the manifest checksum; "
                "store and index come from different builds"
            )
        root = load_index(index_bytes)
        return cls(path, manifest, root)

    def close(self):
        for fd in self._fds.values():
            os.close(fd)
        self._fds.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _fd(self, strip_id: int) -> int:
        fd = self._fds.get(strip_id)
        if fd is None:
            info = self.manifest.strips[strip_id]
            fd = os.open(self.path / info.file, os.O_RDONLY)
            self._fds[strip_id] = fd
        return fd

    def read_bb(self, strip_id: int, offset: int) -> BoundingBox:
        """Positioned read of one record; other records are not touched."""
        bbs, _ = self.read_bb_run(strip_id, [offset])
        return bbs[0]

    def read_bb_run(
        self, strip_id: int, offsets: list[int]
    ) -> tuple[list[BoundingBox], int]:
        """Read records at ascending offsets with one or two positioned reads.

        Requested offsets always form a consecutive record run (tiles of a
        rectangle), so a single span read covers them; a second read fetches
        the tail of the last record once its header is known. Returns the
        boxes and the number of bytes fetched.
        """
        if not offsets:
            return [], 0
        fd = self._fd(strip_id)
        first, last = offsets[0], offsets[-1]
        span = last - first + BB_HEADER_BYTES
        buf = os.pread(fd, span, first)
        bytes_read = len(buf)
        if len(buf) < span:
            raise CorruptionError(f"strip {strip_id}: offset {last} past end of file")
        fields = _HEADER.unpack_from(buf, last - first)
        if fields[4] not in (0, 1) or fields[5] not in (4, 8):
            raise CorruptionError(f"strip {strip_id}: invalid record header at {last}")
        plen = fields[7]
        remaining = self._strip_sizes[strip_id] - (last + BB_HEADER_BYTES)
        tail_len = plen + _CRC.size
        if tail_len > remaining:
            raise CorruptionError(f"strip {strip_id}: truncated record at {last}")
        tail = os.pread(fd, tail_len, last + BB_HEADER_BYTES)
        bytes_read += len(tail)
        data = buf + tail
        bbs = []
        for off in offsets:
            bb, _ = deserialize_bb(data, off - first)
            bbs.append(bb)
        return bbs, bytes_read

    def iter_all_bbs(self, strip_id: int):
        """Sequentially parse every record of one strip (full-scan access)."""
        info = self.manifest.strips[strip_id]
        data = (self.path / info.file).read_bytes()
        if data[: len(STRIP_MAGIC)] != STRIP_MAGIC:
            raise CorruptionError(f"strip file {info.file}: bad magic")
        pos = STRIP_PREAMBLE
        while pos < len(data):
            bb, consumed = deserialize_bb(data, pos)
            yield bb
            pos += consumed

    def strip_payload_bytes(self) -> int:
        """Total record bytes across strips, excluding file preambles."""
        return sum(s.bytes - STRIP_PREAMBLE for s in self.manifest.strips)

    def verify(self) -> None:
        """Full checksum pass over every referenced file."""
        for s in self.manifest.strips:
            data = (self.path / s.file).read_bytes()
            if zlib.crc32(data) != s.crc32:
                raise CorruptionError(f"strip file {s.file}: checksum mismatch")
        index_bytes = (self.path / self.manifest.index_file).read_bytes()
        if zlib.crc32(index_bytes[:-4]) != self.manifest.index_crc32:
            raise CorruptionError("index file: checksum mismatch")


class StripWriter:
    """Appends records to one strip file, tracking offsets and checksum."""

    def __init__(self, path: Path, strip_id: int, row_lo: int, row_hi: int):
        self.path = path
        self.strip_id = strip_id
        self.row_lo = row_lo
        self.row_hi = row_hi
        self.offsets: list[int] = []
        self._f = open(path, "wb")
        preamble = STRIP_MAGIC + struct.pack("<H", FORMAT_VERSION)
        self._f.write(preamble)
        self._crc = zlib.crc32(preamble)
        self._pos = len(preamble)

    def append(self, bb: BoundingBox) -> tuple[int, int]:
        """Write one record; returns (offset, record byte length)."""
        record = serialize_bb(bb)
        offset = self._pos
        self._f.write(record)
        self._crc = zlib.crc32(record, self._crc)
        self._pos += len(record)
        self.offsets.append(offset)
        return offset, len(record)

    def finish(self) -> StripInfo:
        self._f.close()
        return StripInfo(
            strip_id=self.strip_id,
            file=self.path.name,
            row_lo=self.row_lo,
            row_hi=self.row_hi,
            bb_count=len(self.offsets),
            bytes=self._pos,
            crc32=self._crc,
        )
