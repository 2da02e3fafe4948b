"""Streaming reader for the mzXML subset this engine consumes.

Handles scan elements (flat or nested) with msLevel, retentionTime, and
Base64 peak blobs in network byte order, interleaved (m/z, intensity).
Files may be plain or gzip-compressed; compressed peak blobs are rejected.
"""

from __future__ import annotations

import base64
import binascii
import gzip
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .errors import (
    MzXmlParseError,
    MzXmlSchemaError,
    PeakDecodeError,
    UnsupportedFeatureError,
)
from .model import DatasetMeta, SpectrumRecord, cols_of_mz

_RT_RE = re.compile(r"^PT([0-9]+(?:\.[0-9]+)?)S$")


@dataclass(frozen=True)
class PeaksEncoding:
    """Binary layout of a peak blob: IEEE-754 big-endian, (m/z, intensity) pairs."""

    precision: int = 32

    def __post_init__(self):
        if self.precision not in (32, 64):
            raise ValueError("precision must be 32 or 64")

    @property
    def pair_bytes(self) -> int:
        return 2 * (self.precision // 8)

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(">f4" if self.precision == 32 else ">f8")


@dataclass
class IngestStats:
    """Counters accumulated while snapping parsed spectra onto the grid."""

    spectra_read: int = 0
    peaks_read: int = 0
    peaks_dropped_out_of_range: int = 0
    collisions_summed: int = 0


def parse_retention_time(text: str) -> float:
    """Read an ISO-8601 duration of the form PT<seconds>S."""
    m = _RT_RE.match(text.strip())
    if m is None:
        raise MzXmlSchemaError(f"retentionTime {text!r} does not match PT<number>S")
    return float(m.group(1))


def _decode_pair_array(b64: str, enc: PeaksEncoding) -> np.ndarray:
    """Base64 text -> float64 array of shape (n, 2). Fast path for the parser."""
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise PeakDecodeError(f"invalid Base64 peak data: {exc}") from exc
    if len(raw) % enc.pair_bytes:
        raise PeakDecodeError(
            f"peak data truncated: {len(raw)} bytes is not a multiple of "
            f"{enc.pair_bytes} (one {enc.precision}-bit pair)"
        )
    flat = np.frombuffer(raw, dtype=enc.dtype).astype(np.float64)
    return flat.reshape(-1, 2)


def decode_peaks(b64: str, enc: PeaksEncoding) -> np.ndarray:
    """Decode a Base64 peak blob to an (n, 2) array of (m/z, intensity)."""
    return _decode_pair_array(b64, enc)


def encode_peaks(pairs, enc: PeaksEncoding) -> str:
    """Inverse of decode_peaks; used by the mzXML emitter and round-trip tests."""
    arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    return base64.b64encode(arr.astype(enc.dtype).tobytes()).decode("ascii")


def open_mzxml(path: str | Path) -> BinaryIO:
    """Open an mzXML file, transparently unwrapping file-level gzip."""
    f = open(path, "rb")
    magic = f.read(2)
    f.seek(0)
    if magic == b"\x1f\x8b":
        return gzip.open(f, "rb")
    return f


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _scan_label(attrs: dict, ordinal: int) -> str:
    return attrs.get("num", f"#{ordinal}")


def _require(attrs: dict, name: str, label: str) -> str:
    try:
        return attrs[name]
    except KeyError:
        raise MzXmlSchemaError(f"scan {label}: missing required attribute {name!r}") from None


def _check_peaks_attrs(attrs: dict, label: str) -> PeaksEncoding:
    order = attrs.get("byteOrder", "network")
    if order != "network":
        raise UnsupportedFeatureError(
            f"scan {label}: byteOrder {order!r} not supported (network only)"
        )
    comp = attrs.get("compressionType", "none")
    if comp not in ("none", ""):
        raise UnsupportedFeatureError(
            f"scan {label}: compressed peaks ({comp!r}) not supported"
        )
    pair_order = attrs.get("pairOrder", attrs.get("contentType", "m/z-int"))
    if pair_order != "m/z-int":
        raise UnsupportedFeatureError(
            f"scan {label}: pairOrder {pair_order!r} not supported"
        )
    precision = attrs.get("precision")
    if precision is None:
        raise MzXmlSchemaError(f"scan {label}: peaks element missing precision")
    if precision not in ("32", "64"):
        raise UnsupportedFeatureError(f"scan {label}: precision {precision!r} not supported")
    return PeaksEncoding(precision=int(precision))


def parse_mzxml(
    stream: BinaryIO, wanted_ms_level: int, *, decode: bool = True
) -> Iterator[SpectrumRecord]:
    """Yield SpectrumRecords for scans at the wanted MS level, in document order.

    Memory is bounded by one scan's peak list. With decode=False the Base64
    text is skipped and records carry empty peak arrays (used by the builder's
    first pass over a file).
    """
    empty = np.empty(0, dtype=np.float64)
    # stack of open scans; each item is [attrs, ordinal, (peaks text, attrs) or None]
    stack: list[list] = []
    root = None
    ordinal = 0
    try:
        for event, elem in ET.iterparse(stream, events=("start", "end")):
            tag = _local(elem.tag)
            if event == "start":
                if root is None:
                    root = elem
                if tag == "scan":
                    ordinal += 1
                    stack.append([dict(elem.attrib), ordinal, None])
                continue
            if tag == "peaks" and stack:
                stack[-1][2] = (elem.text or "", dict(elem.attrib))
                elem.clear()
            elif tag == "scan":
                attrs, n, peaks = stack.pop()
                if not stack and root is not None:
                    root.clear()
                label = _scan_label(attrs, n)
                level = int(_require(attrs, "msLevel", label))
                if level == wanted_ms_level:
                    rt = parse_retention_time(_require(attrs, "retentionTime", label))
                    if peaks is None:
                        raise MzXmlSchemaError(f"scan {label}: no peaks element")
                    text, pattrs = peaks
                    enc = _check_peaks_attrs(pattrs, label)
                    if decode and text.strip():
                        pairs = _decode_pair_array(text, enc)
                        yield SpectrumRecord(rt, level, pairs[:, 0], pairs[:, 1])
                    else:
                        yield SpectrumRecord(rt, level, empty, empty)
    except ET.ParseError as exc:
        offset = None
        try:
            offset = stream.tell()
        except (OSError, ValueError):
            pass
        where = f" (near byte {offset})" if offset is not None else ""
        raise MzXmlParseError(
            f"malformed XML at line {exc.position[0]}, column {exc.position[1]}{where}"
        ) from exc


def snap_to_grid(
    record: SpectrumRecord, meta: DatasetMeta, stats: IngestStats
) -> tuple[np.ndarray, np.ndarray]:
    """Snap one spectrum's peaks to grid columns.

    Returns (cols, intensities) sorted by column, with colliding columns
    summed, out-of-range peaks dropped, and zero intensities discarded.
    Counters in `stats` are updated in place.
    """
    stats.spectra_read += 1
    stats.peaks_read += int(record.mz.size)
    if record.mz.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    in_range = (record.mz >= meta.mz_min) & (record.mz <= meta.mz_max)
    dropped = int(record.mz.size - np.count_nonzero(in_range))
    stats.peaks_dropped_out_of_range += dropped
    mz = record.mz[in_range]
    inten = record.intensity[in_range]
    nonzero = inten != 0.0
    mz, inten = mz[nonzero], inten[nonzero]
    if mz.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    cols = cols_of_mz(mz, meta)
    uniq, inverse = np.unique(cols, return_inverse=True)
    if uniq.size == cols.size:
        order = np.argsort(cols, kind="stable")
        return cols[order], inten[order]
    stats.collisions_summed += int(cols.size - uniq.size)
    summed = np.zeros(uniq.size, dtype=np.float64)
    np.add.at(summed, inverse, inten)
    return uniq, summed
