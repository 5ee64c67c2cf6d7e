"""Static R-trees over points, optionally carrying per-node probability bounds.

Trees are bulk loaded with sort-tile-recursive packing and never change
after construction.  A tree over midpoints with ``probs`` supplied is the
probability-augmented product tree; without ``probs`` it is the plain
customer tree.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import DimensionError, ProbPoint, ProductSet, dominates_wrt

MIXED = -1


class Mbr(NamedTuple):
    low: np.ndarray
    high: np.ndarray


@dataclass(eq=False)
class Node:
    nid: int
    low: np.ndarray
    high: np.ndarray
    children: list["Node"] | None = None
    rows: np.ndarray | None = None  # leaf only: row numbers into RTree.coords
    prob_min: float | None = None
    prob_max: float | None = None
    count: int = 0
    # internal only: children's boxes stacked, for vectorised child tests
    child_low: np.ndarray | None = None
    child_high: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def mbr(self) -> Mbr:
        return Mbr(self.low, self.high)


class RTree:
    """Bulk-loaded R-tree.  ``ids`` and ``probs`` are carried along row-wise."""

    def __init__(self, coords, ids=None, probs=None, max_entries: int = 50):
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim != 2 or len(coords) == 0:
            raise ValueError("cannot build a tree over an empty point set")
        if max_entries < 2:
            raise ValueError("max_entries must be at least 2")
        self.coords = coords
        self.ids = np.arange(len(coords)) if ids is None else np.asarray(ids)
        self.probs = None if probs is None else np.asarray(probs, dtype=np.float64)
        self.max_entries = max_entries
        self._next_id = itertools.count()
        self.root = self._pack()

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def __len__(self) -> int:
        return len(self.coords)

    # -- construction ------------------------------------------------------

    def _pack(self) -> Node:
        groups = _str_partition(np.arange(len(self.coords)), self.coords, self.max_entries)
        level = [self._leaf(rows) for rows in groups]
        self.height = 1
        while len(level) > 1:
            centers = np.array([(n.low + n.high) / 2.0 for n in level])
            groups = _str_partition(np.arange(len(level)), centers, self.max_entries)
            level = [self._internal([level[i] for i in g]) for g in groups]
            self.height += 1
        return level[0]

    def _leaf(self, rows: np.ndarray) -> Node:
        pts = self.coords[rows]
        node = Node(next(self._next_id), pts.min(axis=0), pts.max(axis=0), rows=rows, count=len(rows))
        if self.probs is not None:
            pr = self.probs[rows]
            node.prob_min, node.prob_max = float(pr.min()), float(pr.max())
        return node

    def _internal(self, children: list[Node]) -> Node:
        node = Node(
            next(self._next_id),
            np.min([c.low for c in children], axis=0),
            np.max([c.high for c in children], axis=0),
            children=children,
            count=sum(c.count for c in children),
            child_low=np.array([c.low for c in children]),
            child_high=np.array([c.high for c in children]),
        )
        if self.probs is not None:
            node.prob_min = min(c.prob_min for c in children)
            node.prob_max = max(c.prob_max for c in children)
        return node

    # -- inspection ----------------------------------------------------------

    def nodes(self):
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            if not n.is_leaf:
                stack.extend(n.children)

    def leaves(self):
        return (n for n in self.nodes() if n.is_leaf)

    def subtree_rows(self, node: Node) -> np.ndarray:
        if node.is_leaf:
            return node.rows
        return np.concatenate([n.rows for n in _iter_leaves(node)])

    def range_query(self, low, high) -> np.ndarray:
        """Row numbers of all points inside the closed box ``[low, high]``."""
        low = np.asarray(low, dtype=np.float64)
        high = np.asarray(high, dtype=np.float64)
        out = []
        if (self.root.low > high).any() or (self.root.high < low).any():
            return np.empty(0, dtype=np.int64)
        stack = [self.root]
        while stack:
            n = stack.pop()
            if n.is_leaf:
                pts = self.coords[n.rows]
                if (n.low >= low).all() and (n.high <= high).all():
                    out.append(n.rows)
                    continue
                inside = ((pts >= low) & (pts <= high)).all(axis=1)
                if inside.any():
                    out.append(n.rows[inside])
            else:
                hit = ~((n.child_low > high) | (n.child_high < low)).any(axis=1)
                stack.extend(n.children[i] for i in np.flatnonzero(hit))
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(out))

    def dominators_of(self, c, p) -> np.ndarray:
        """Rows of the points dynamically dominating ``p`` w.r.t. ``c``."""
        c = np.asarray(c, dtype=np.float64)
        tp = np.abs(np.asarray(p, dtype=np.float64) - c)
        rows = self.range_query(c - tp, c + tp)
        t = np.abs(self.coords[rows] - c)
        return rows[(t <= tp).all(axis=1) & (t < tp).any(axis=1)]


def _iter_leaves(node: Node):
    stack = [node]
    while stack:
        n = stack.pop()
        if n.is_leaf:
            yield n
        else:
            stack.extend(n.children)


def _str_partition(rows: np.ndarray, coords: np.ndarray, cap: int, dim: int = 0) -> list[np.ndarray]:
    """Split ``rows`` into groups of at most ``cap`` using sort-tile-recursive
    slabs.  Group sizes differ by at most one, so every group holds at least
    ``ceil(cap / 2)`` rows whenever there are ``cap`` or more rows."""
    n = len(rows)
    n_groups = math.ceil(n / cap)
    d = coords.shape[1]
    order = rows[np.argsort(coords[rows, dim], kind="stable")]
    if n_groups == 1:
        return [order]
    if dim == d - 1:
        return np.array_split(order, n_groups)
    n_slabs = math.ceil(n_groups ** (1.0 / (d - dim)))
    n_slabs = min(n_slabs, n_groups)
    sizes = np.array([len(g) for g in np.array_split(np.empty(n), n_groups)])
    per_slab = [len(s) for s in np.array_split(np.empty(n_groups), n_slabs)]
    out = []
    start = g = 0
    for k in per_slab:
        stop = start + int(sizes[g:g + k].sum())
        out.extend(_str_partition(order[start:stop], coords, cap, dim + 1))
        start, g = stop, g + k
    return out


def build_tree(entries, max_entries: int = 50) -> RTree:
    """Tree over midpoints (probability-augmented), probabilistic products,
    or plain customer coordinates.

    ``entries`` may be a :class:`ProductSet`, a sequence of
    :class:`~urskyline.core.Midpoint`, a sequence of :class:`ProbPoint`, or
    an ``(n, d)`` array of customer coordinates.
    """
    if isinstance(entries, ProductSet):
        return RTree(entries.coords, entries.ids, entries.probs, max_entries)
    if isinstance(entries, np.ndarray):
        return RTree(entries, None, None, max_entries)
    entries = list(entries)
    if not entries:
        raise ValueError("cannot build a tree over an empty point set")
    first = entries[0]
    if hasattr(first, "source_prob"):
        return RTree([m.coords for m in entries], [m.source_id for m in entries],
                     [m.source_prob for m in entries], max_entries)
    if isinstance(first, ProbPoint):
        return RTree([p.coords for p in entries], [p.id for p in entries],
                     [p.prob for p in entries], max_entries)
    return RTree(np.asarray(entries, dtype=np.float64), None, None, max_entries)


def midpoint_tree(q: Sequence[float], products: ProductSet, max_entries: int = 50) -> RTree:
    """Probability-augmented tree over the midpoints of ``products`` w.r.t. ``q``."""
    q = np.asarray(q, dtype=np.float64)
    if products.dim != len(q):
        raise DimensionError(f"query has d={len(q)}, products d={products.dim}")
    return RTree((products.coords + q) / 2.0, products.ids, products.probs, max_entries)


# -- node predicates ---------------------------------------------------------


def _check(q, mbr):
    q = np.asarray(q, dtype=np.float64)
    low = np.asarray(mbr[0], dtype=np.float64)
    high = np.asarray(mbr[1], dtype=np.float64)
    if not len(q) == len(low) == len(high):
        raise DimensionError("query and rectangle differ in dimensionality")
    return q, low, high


def mindist(q, mbr) -> float:
    """Squared Euclidean distance from ``q`` to the nearest point of ``mbr``."""
    q, low, high = _check(q, mbr)
    gap = np.maximum(low - q, 0.0) + np.maximum(q - high, 0.0)
    return float(gap @ gap)


def node_orthant(q, mbr) -> str:
    """Common orthant code of every point in ``mbr``, or ``"mixed"``."""
    q, low, high = _check(q, mbr)
    bits = []
    for lo, hi, qi in zip(low, high, q):
        if hi <= qi:
            bits.append("0")
        elif lo > qi:
            bits.append("1")
        else:
            return "mixed"
    return "".join(bits)


def node_code(q: np.ndarray, low: np.ndarray, high: np.ndarray) -> int:
    """Integer form of :func:`node_orthant`; ``MIXED`` when the box straddles q."""
    above = low > q
    if not (above | (high <= q)).all():
        return MIXED
    return int(above @ (1 << np.arange(len(q))))


def corners(mbr) -> np.ndarray:
    low, high = np.asarray(mbr[0]), np.asarray(mbr[1])
    d = len(low)
    pick = np.array(list(itertools.product((0, 1), repeat=d)), dtype=bool)
    return np.where(pick, high, low)


def node_dominated_by(q, m, mbr) -> bool:
    """True iff ``m`` dynamically dominates every point of ``mbr`` w.r.t. ``q``.

    All corners are tested, plus the point of the box nearest to q: when the
    box straddles q in some dimension that point is interior and closer than
    every corner, so the corners alone would over-report.
    """
    q, low, high = _check(q, mbr)
    if not dominates_wrt(q, m, near_corner(q, (low, high))):
        return False
    return all(dominates_wrt(q, m, corner) for corner in corners((low, high)))


def far_corner(q, mbr) -> np.ndarray:
    q, low, high = _check(q, mbr)
    return np.where(np.abs(high - q) >= np.abs(low - q), high, low)


def near_corner(q, mbr) -> np.ndarray:
    q, low, high = _check(q, mbr)
    return np.clip(q, low, high)


# -- best-first traversal ------------------------------------------------------


class MinHeap:
    """Min-heap keyed by (distance, stable tiebreak); records pop keys on request."""

    def __init__(self, record: bool = False):
        self._items = []
        self.popped = [] if record else None

    def push(self, key: float, tiebreak, item) -> None:
        heapq.heappush(self._items, (key, tiebreak, item))

    def pop(self):
        key, tiebreak, item = heapq.heappop(self._items)
        if self.popped is not None:
            self.popped.append(key)
        return key, item

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)
