"""Search tree over bounding boxes, bulk-built by recursive six-way grouping.

With W boxes and leaf capacity f, a set of at most f boxes becomes a single
leaf. A larger set is split into six groups of q = ceil(W/6) boxes each
(the last takes the remainder): picked by smallest top row, then smallest
left column, then largest bottom row, then largest right column, then
smallest left column again, with whatever is left forming the sixth group.
Ties are broken by (strip_id, offset) so identical inputs always serialize
to identical bytes. Every node carries the minimum bounding rectangle of its
descendants; queries descend only into subtrees whose rectangle intersects
the query.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError
from .model import QueryRect

INDEX_MAGIC = b"MZRTIDX0"
INDEX_VERSION = 1

_PREAMBLE = struct.Struct("<8sHHII")  # magic, version, d, f, node count
_MBR = struct.Struct("<BIIII")  # kind, row_lo, row_hi, col_lo, col_hi
_COUNT = struct.Struct("<I")
_REF = struct.Struct("<IIIIIQ")  # coords, strip_id, offset
_CRC = struct.Struct("<I")


@dataclass(frozen=True)
class BBRef:
    """Index-side handle to one stored bounding box."""

    top_rt: int
    bottom_rt: int
    left_mz: int
    right_mz: int
    strip_id: int
    offset: int

    def intersects(self, row_lo: int, row_hi: int, col_lo: int, col_hi: int) -> bool:
        return (
            self.top_rt <= row_hi
            and self.bottom_rt >= row_lo
            and self.left_mz <= col_hi
            and self.right_mz >= col_lo
        )


@dataclass(frozen=True)
class IndexParams:
    d: int = 6
    f: int = 200

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("fanout d must be >= 2")
        if self.f < 1:
            raise ValueError("leaf capacity f must be >= 1")


@dataclass
class RTreeNode:
    """Internal node (children) or leaf (refs); mbr covers all descendants."""

    mbr: tuple[int, int, int, int]  # row_lo, row_hi, col_lo, col_hi
    children: list["RTreeNode"] = field(default_factory=list)
    refs: list[BBRef] = field(default_factory=list)
    # lazy (n, 4) coordinate cache for vectorized leaf filtering
    _coords: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def leaf_coords(self) -> np.ndarray:
        if self._coords is None:
            self._coords = np.array(
                [(r.top_rt, r.bottom_rt, r.left_mz, r.right_mz) for r in self.refs],
                dtype=np.int64,
            ).reshape(-1, 4)
        return self._coords


def _mbr_of_refs(refs: list[BBRef]) -> tuple[int, int, int, int]:
    return (
        min(r.top_rt for r in refs),
        max(r.bottom_rt for r in refs),
        min(r.left_mz for r in refs),
        max(r.right_mz for r in refs),
    )


def _mbr_union(boxes) -> tuple[int, int, int, int]:
    return (
        min(b[0] for b in boxes),
        max(b[1] for b in boxes),
        min(b[2] for b in boxes),
        max(b[3] for b in boxes),
    )


# Selection keys for groups 1..5; the sixth group is the remainder. Each entry
# is (attribute, descending?). The fifth key repeats the second on purpose.
_GROUP_KEYS = [
    ("top_rt", False),
    ("left_mz", False),
    ("bottom_rt", True),
    ("right_mz", True),
    ("left_mz", False),
]


def partition_groups(refs: list[BBRef], params: IndexParams) -> list[list[BBRef]]:
    """Split an oversized ref set into the six construction groups.

    Groups 1..5 take exactly q = ceil(W/6) refs each while refs remain; the
    sixth gets the rest. Empty trailing groups are possible only at
    test-scale parameters and are dropped by the caller.
    """
    w = len(refs)
    if w <= params.f:
        raise ValueError(f"partition requires more than f={params.f} refs, got {w}")
    q = -(-w // 6)
    remainder = list(refs)
    groups = []
    for attr, descending in _GROUP_KEYS:
        if descending:
            key = lambda r, a=attr: (-getattr(r, a), r.strip_id, r.offset)
        else:
            key = lambda r, a=attr: (getattr(r, a), r.strip_id, r.offset)
        remainder.sort(key=key)
        groups.append(remainder[:q])
        remainder = remainder[q:]
    groups.append(remainder)
    return groups


def build_tree(refs: list[BBRef], params: IndexParams | None = None) -> RTreeNode:
    """Bulk-build the search tree over a nonempty ref set."""
    params = params or IndexParams()
    if params.d != 6:
        raise ValueError("the six-way grouping requires d=6")
    if not refs:
        raise ValueError("cannot build an index over zero bounding boxes")
    if len(refs) <= params.f:
        return RTreeNode(mbr=_mbr_of_refs(refs), refs=list(refs))
    children = [
        build_tree(group, params)
        for group in partition_groups(refs, params)
        if group
    ]
    if len(children) == 1:
        return children[0]
    return RTreeNode(mbr=_mbr_union([c.mbr for c in children]), children=children)


def tree_height(node: RTreeNode) -> int:
    if node.is_leaf:
        return 0
    return 1 + max(tree_height(c) for c in node.children)


def _mbr_intersects(mbr, row_lo, row_hi, col_lo, col_hi) -> bool:
    return (
        mbr[0] <= row_hi and mbr[1] >= row_lo and mbr[2] <= col_hi and mbr[3] >= col_lo
    )


def query_index(
    root: RTreeNode | None, rect: QueryRect
) -> tuple[list[BBRef], int]:
    """Refs whose boxes intersect rect, plus the number of nodes visited.

    Subtrees whose rectangle misses the query are pruned without a visit.
    Results come back ordered by (strip_id, offset).
    """
    if root is None or rect.is_empty:
        return [], 0
    row_lo, row_hi = rect.row_lo, rect.row_hi
    col_lo, col_hi = rect.col_lo, rect.col_hi
    out: list[BBRef] = []
    visited = 0
    stack = [root]
    if not _mbr_intersects(root.mbr, row_lo, row_hi, col_lo, col_hi):
        return [], 1
    while stack:
        node = stack.pop()
        visited += 1
        if node.is_leaf:
            if len(node.refs) <= 8:
                out.extend(
                    r for r in node.refs if r.intersects(row_lo, row_hi, col_lo, col_hi)
                )
            else:
                a = node.leaf_coords()
                hit = (
                    (a[:, 0] <= row_hi)
                    & (a[:, 1] >= row_lo)
                    & (a[:, 2] <= col_hi)
                    & (a[:, 3] >= col_lo)
                )
                refs = node.refs
                out.extend(refs[i] for i in np.flatnonzero(hit))
        else:
            stack.extend(
                c
                for c in node.children
                if _mbr_intersects(c.mbr, row_lo, row_hi, col_lo, col_hi)
            )
    out.sort(key=lambda r: (r.strip_id, r.offset))
    return out, visited


def iter_leaf_refs(root: RTreeNode | None):
    if root is None:
        return
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            yield from node.refs
        else:
            stack.extend(node.children)


def serialize_index(root: RTreeNode | None, params: IndexParams | None = None) -> bytes:
    """Preorder dump with a trailing CRC32; byte-stable for identical trees."""
    params = params or IndexParams()
    chunks: list[bytes] = []
    count = 0

    def emit(node: RTreeNode):
        nonlocal count
        count += 1
        kind = 0 if node.is_leaf else 1
        chunks.append(_MBR.pack(kind, *node.mbr))
        if node.is_leaf:
            chunks.append(_COUNT.pack(len(node.refs)))
            for r in node.refs:
                chunks.append(
                    _REF.pack(
                        r.top_rt, r.bottom_rt, r.left_mz, r.right_mz,
                        r.strip_id, r.offset,
                    )
                )
        else:
            chunks.append(_COUNT.pack(len(node.children)))
            for c in node.children:
                emit(c)

    if root is not None:
        emit(root)
    body = b"".join(chunks)
    head = _PREAMBLE.pack(INDEX_MAGIC, INDEX_VERSION, params.d, params.f, count)
    return head + body + _CRC.pack(zlib.crc32(head + body))


def load_index(data: bytes) -> RTreeNode | None:
    """Parse serialized bytes back into a tree; raises CorruptionError on damage."""
    if len(data) < _PREAMBLE.size + _CRC.size:
        raise CorruptionError("index data truncated")
    magic, version, d, f, count = _PREAMBLE.unpack_from(data, 0)
    if magic != INDEX_MAGIC:
        raise CorruptionError("bad index magic")
    if version != INDEX_VERSION:
        raise CorruptionError(f"unsupported index version {version}")
    (stored,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(data[: -_CRC.size]) != stored:
        raise CorruptionError("index checksum mismatch")
    pos = _PREAMBLE.size
    end = len(data) - _CRC.size

    def parse() -> RTreeNode:
        nonlocal pos
        if pos + _MBR.size + _COUNT.size > end:
            raise CorruptionError("index node truncated")
        kind, a, b, c_, d_ = _MBR.unpack_from(data, pos)
        pos += _MBR.size
        (n,) = _COUNT.unpack_from(data, pos)
        pos += _COUNT.size
        node = RTreeNode(mbr=(a, b, c_, d_))
        if kind == 0:
            need = n * _REF.size
            if pos + need > end:
                raise CorruptionError("index leaf truncated")
            for _ in range(n):
                node.refs.append(BBRef(*_REF.unpack_from(data, pos)))
                pos += _REF.size
        else:
            for _ in range(n):
                node.children.append(parse())
        return node

    if count == 0:
        if pos != end:
            raise CorruptionError("index trailing bytes after empty tree")
        return None
    root = parse()
    if pos != end:
        raise CorruptionError("index trailing bytes after last node")
    return root
