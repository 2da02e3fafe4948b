"""Storage engine and spatial index for 2D (retention time x m/z) intensity data.

The on-disk layout splits the matrix into row strips tiled by ~5 Da bounding
boxes with dense or sparse payloads; a bulk-built search tree over the boxes
serves rectangular range queries. Includes an mzXML-subset reader/writer,
synthetic dataset generators, naive baseline engines, and a benchmark CLI.
"""

from .builder import BuildResult, build_store, build_store_from_mzxml
from .errors import (
    BenchError,
    ConsistencyError,
    CorruptionError,
    GridRangeError,
    IngestError,
    MzRTreeError,
)
from .generate import GenMode, GenSpec, emit_mzxml, generate, generate_peaked, generate_uniform
from .index import BBRef, IndexParams, RTreeNode, build_tree, partition_groups, query_index
from .model import (
    DatasetMeta,
    PeakEntry,
    QueryRect,
    SpectrumRecord,
    col_of_mz,
    density,
    mz_of_col,
    query_rect_from_physical,
)
from .mzxml import IngestStats, PeaksEncoding, decode_peaks, encode_peaks, open_mzxml, parse_mzxml
from .query import (
    PeptideSize,
    QueryResult,
    chromatogram,
    peptide_query,
    range_query,
    spectrum_block,
)
from .storage import BoundingBox, Store, StoreManifest, choose_k, plan_strips

__version__ = "0.1.0"

__all__ = [
    "BBRef",
    "BenchError",
    "BoundingBox",
    "BuildResult",
    "ConsistencyError",
    "CorruptionError",
    "DatasetMeta",
    "GenMode",
    "GenSpec",
    "GridRangeError",
    "IndexParams",
    "IngestError",
    "IngestStats",
    "MzRTreeError",
    "PeakEntry",
    "PeaksEncoding",
    "PeptideSize",
    "QueryRect",
    "QueryResult",
    "RTreeNode",
    "SpectrumRecord",
    "Store",
    "StoreManifest",
    "build_store",
    "build_store_from_mzxml",
    "build_tree",
    "chromatogram",
    "choose_k",
    "col_of_mz",
    "decode_peaks",
    "density",
    "emit_mzxml",
    "encode_peaks",
    "generate",
    "generate_peaked",
    "generate_uniform",
    "mz_of_col",
    "open_mzxml",
    "parse_mzxml",
    "partition_groups",
    "peptide_query",
    "plan_strips",
    "query_index",
    "query_rect_from_physical",
    "range_query",
    "spectrum_block",
]
