"""Master/worker evaluation of the reverse skyline and the influence score.

Products and customers are split into disjoint partitions, each with its own
trees.  Workers are stateless functions over immutable partition snapshots:
they receive values and return values, and the coordinator merges results
in a fixed order, so the outcome never depends on scheduling.

URS runs in two rounds.  Round one computes a local UMSL per product
partition and merges them; round two ships the merged UMSL to every
customer partition.  The influence score then resolves, for each URS
member, the uncertain dynamic skyline from per-partition splits: locally
undominated points (``uds``) and locally dominated but not locally
UD-dominated points (``udsscan``) whose probabilities still need the
dominators living in other partitions.
"""

from __future__ import annotations

import time
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import CustomerSet, DimensionError, ProbPoint, ProductSet, dominance_matrix, prob_guard
from .dominance import UdsResult
from .index import MinHeap, RTree, build_tree, midpoint_tree
from .query import (
    InfluenceReport,
    UdsEntry,
    UmslSet,
    SMALL_TREE,
    UrsResult,
    _is_optimized,
    compute_umsl,
    compute_urs,
    uds_search,
)

ROUND_ROBIN = "round_robin"
CONTIGUOUS = "contiguous"
POLICIES = (ROUND_ROBIN, CONTIGUOUS)


@dataclass(frozen=True)
class Partition:
    index: int
    data: ProductSet | CustomerSet


def partition(data: ProductSet | CustomerSet, k: int, policy: str = ROUND_ROBIN) -> list[Partition]:
    """Split a dataset into at most ``k`` disjoint, covering chunks.

    Rows are ordered by id first.  ``round_robin`` deals them out one at a
    time; ``contiguous`` cuts the ordered rows into consecutive runs.  Sizes
    differ by at most one and empty chunks are never produced.
    """
    if k < 1:
        raise ValueError(f"worker count must be at least 1, got {k}")
    if policy not in POLICIES:
        raise ValueError(f"unknown partition policy {policy!r}")
    order = np.argsort(data.ids, kind="stable")
    k = min(k, len(order)) or 1
    if policy == ROUND_ROBIN:
        chunks = [order[j::k] for j in range(k)]
    else:
        chunks = np.array_split(order, k)
    return [Partition(j, data.take(rows)) for j, rows in enumerate(chunks)]


# -- round 1 and 2: reverse skyline ------------------------------------------------


def local_umsl(q: ProbPoint, products: ProductSet, *, optimized: bool = False,
               max_entries: int = 50, counters: dict | None = None) -> UmslSet:
    """UMSL of ``q`` restricted to one product partition."""
    if not len(products):
        return UmslSet.empty(q.coords)
    tree = midpoint_tree(q.coords, products, max_entries)
    return compute_umsl(q, tree, optimized=optimized, counters=counters)


def merge_umsl(q: ProbPoint, locals_: list[UmslSet]) -> UmslSet:
    """Global UMSL from local ones.

    Candidates leave a heap in (squared distance to q, product id) order and
    are kept unless an already-kept member of the same orthant dominates
    them.  The probability guard is not re-checked: every local member
    already passed it.
    """
    qc = np.asarray(q.coords, dtype=np.float64)
    heap = MinHeap()
    for loc in locals_:
        for k in range(len(loc)):
            t = np.abs(loc.coords[k] - qc)
            heap.push(float(t @ t), int(loc.source_ids[k]), (loc, k, t))
    kept = []
    by_code: dict[int, list[np.ndarray]] = {}
    while heap:
        _, (loc, k, t) = heap.pop()
        code = int(loc.codes[k])
        rivals = by_code.setdefault(code, [])
        if rivals:
            a = np.array(rivals)
            if ((a <= t).all(axis=1) & (a < t).any(axis=1)).any():
                continue
        rivals.append(t)
        kept.append((loc, k))
    if not kept:
        return UmslSet.empty(qc)
    return UmslSet(
        qc,
        np.array([loc.coords[k] for loc, k in kept]),
        np.array([loc.source_ids[k] for loc, k in kept], dtype=np.int64),
        np.array([loc.source_probs[k] for loc, k in kept]),
        np.array([loc.codes[k] for loc, k in kept], dtype=np.int64),
    )


# -- influence: split, merge, resolve ----------------------------------------------


@dataclass
class UdsSplit:
    """One partition's view of a customer's uncertain dynamic skyline.

    ``dsky`` of every entry is partial: it only accounts for dominators
    inside the partition (so it is the raw probability for ``uds_local``).
    """

    customer_id: int | None
    uds_local: list[UdsEntry]
    udsscan_local: list[UdsEntry]


@dataclass
class UdsMerge:
    """Coordinator state after merging splits: ``uds`` holds the dynamic
    skyline over P ∪ {q} with exact probabilities, ``scan`` the remaining
    candidates whose probabilities are still stale upper bounds."""

    customer_id: int | None
    uds: list[UdsEntry]
    scan: list[UdsEntry]


def local_uds_split(c, tree: RTree | None, customer_id: int | None = None) -> UdsSplit:
    """Products of one partition that are not UD-dominated within it, split
    by whether some partition product dominates them."""
    entries = uds_search(c, tree) if tree is not None else []
    return UdsSplit(customer_id,
                    [e for e in entries if e.n_dominators == 0],
                    [e for e in entries if e.n_dominators > 0])


def local_uds_split_many(cust: np.ndarray, tree: RTree | None, customer_ids,
                         block: int = 1 << 22) -> list[UdsSplit]:
    """``local_uds_split`` for many customers at once.  Small partitions are
    settled for a whole batch of customers in a few array operations; the
    probabilities are multiplied in the same row order as ``uds_search``."""
    if tree is None or len(tree) > SMALL_TREE:
        return [local_uds_split(c, tree, cid) for cid, c in zip(customer_ids, cust)]
    n = len(tree)
    keep = 1.0 - tree.probs
    step = max(1, block // (n * n))
    out = []
    for s in range(0, len(cust), step):
        t = np.abs(tree.coords[None, :, :] - cust[s:s + step, None, :])  # (m, n, d)
        le = np.ones((len(t), n, n), dtype=bool)
        lt = np.zeros((len(t), n, n), dtype=bool)
        for k in range(t.shape[2]):
            x, y = t[:, :, None, k], t[:, None, :, k]
            le &= x <= y
            lt |= x < y
        dom = le & lt  # dom[c, i, j]: row i dominates row j w.r.t. customer c
        dsky = tree.probs * np.prod(np.where(dom, keep[None, :, None], 1.0), axis=1)
        ndom = dom.sum(axis=1)
        alive = ~(dom & (dsky[:, :, None] >= dsky[:, None, :])).any(axis=1)
        for b, cid in enumerate(customer_ids[s:s + step]):
            entries = [UdsEntry(int(tree.ids[r]), tree.coords[r], float(tree.probs[r]),
                                float(dsky[b, r]), int(ndom[b, r]))
                       for r in np.flatnonzero(alive[b])]
            out.append(UdsSplit(cid, [e for e in entries if e.n_dominators == 0],
                                [e for e in entries if e.n_dominators > 0]))
    return out


def merge_uds(c, splits: list[UdsSplit], q: ProbPoint | None = None) -> UdsMerge:
    """Combine partition splits (plus the query) for one customer.

    Pooled ``uds`` points dominated by another pooled point move to the scan
    set.  Scan points are discarded only when that is safe before their
    probabilities are known: a pooled skyline point dominates them with at
    least their (upper-bound) probability, or any candidate dominates them
    while passing the probability guard.
    """
    c = np.asarray(c, dtype=np.float64)
    cid = splits[0].customer_id if splits else None
    pool = [e for s in splits for e in s.uds_local]
    scan = [e for s in splits for e in s.udsscan_local]
    if q is not None:
        qc = np.asarray(q.coords, dtype=np.float64)
        pool.append(UdsEntry(q.id, qc, q.prob, q.prob, 0))
    pool.sort(key=lambda e: e.id)
    scan.sort(key=lambda e: e.id)
    if pool:
        tp = np.abs(np.array([e.coords for e in pool]) - c)
        moved = dominance_matrix(tp, tp).any(axis=0)
        scan = sorted(scan + [e for e, m in zip(pool, moved) if m], key=lambda e: e.id)
        pool = [e for e, m in zip(pool, moved) if not m]
    if pool and scan:
        tp = np.abs(np.array([e.coords for e in pool]) - c)
        ts = np.abs(np.array([e.coords for e in scan]) - c)
        ps = np.array([e.prob for e in scan])
        stale = np.array([e.dsky for e in scan])
        exact = np.array([e.dsky for e in pool])
        gone = (dominance_matrix(tp, ts) & (exact[:, None] >= stale[None, :])).any(axis=0)
        ta = np.vstack([tp, ts])
        pa = np.array([e.prob for e in pool] + [e.prob for e in scan])
        gone |= (dominance_matrix(ta, ts) & prob_guard(ps[None, :], pa[:, None])).any(axis=0)
        scan = [e for e, g in zip(scan, gone) if not g]
    return UdsMerge(cid, pool, scan)


def dominators_in_partition(c, p, tree: RTree | None) -> list[tuple[int, float]]:
    """(id, probability) of every partition product dominating ``p`` w.r.t. ``c``,
    via a window query around ``c`` followed by an exact dominance filter."""
    if tree is None:
        return []
    rows = tree.dominators_of(c, p)
    return [(int(tree.ids[r]), float(tree.probs[r])) for r in rows]


def dominators_in_partition_many(c, points, tree: RTree | None) -> list[list[tuple[int, float]]]:
    """:func:`dominators_in_partition` for several points of one customer,
    answered with a single window query covering all of them."""
    if tree is None or not len(points):
        return [[] for _ in range(len(points))]
    c = np.asarray(c, dtype=np.float64)
    t = np.abs(np.asarray(points, dtype=np.float64) - c)
    reach = t.max(axis=0)
    rows = tree.range_query(c - reach, c + reach)
    dm = dominance_matrix(np.abs(tree.coords[rows] - c), t)
    ids, probs = tree.ids[rows].tolist(), tree.probs[rows].tolist()
    return [[(ids[r], probs[r]) for r in np.flatnonzero(col)] for col in dm.T]


def resolve_uds(c, merged: UdsMerge, found: list[list[list[tuple[int, float]]]],
                q: ProbPoint | None = None) -> UdsResult:
    """Finish a customer's UDS once every partition has reported the
    dominators of each scan point (``found[j][i]``: partition j, scan point i).

    Each scan probability is the raw probability times the product of one
    ``1 - Pr`` factor per distinct dominator, taken in id order with the
    query last (the order the single-node path uses when ids follow row
    order, so both give bit-identical values).
    """
    c = np.asarray(c, dtype=np.float64)
    entries = list(merged.uds)
    tq = None if q is None else np.abs(np.asarray(q.coords, dtype=np.float64) - c)
    for i, e in enumerate(merged.scan):
        doms = {pid: pr for part in found for pid, pr in part[i]}
        if tq is not None and e.id != q.id:
            te = np.abs(e.coords - c)
            if (tq <= te).all() and (tq < te).any():
                doms[q.id] = q.prob
        keep = 1.0
        for pid in sorted(doms, key=lambda i: (q is not None and i == q.id, i)):
            keep *= 1.0 - doms[pid]
        entries.append(UdsEntry(e.id, e.coords, e.prob, e.prob * keep, len(doms)))
    if not entries:
        return UdsResult(merged.customer_id, {})
    entries.sort(key=lambda e: e.id)
    t = np.abs(np.array([e.coords for e in entries]) - c)
    dsky = np.array([e.dsky for e in entries])
    ud = (dominance_matrix(t, t) & (dsky[:, None] >= dsky[None, :])).any(axis=0)
    return UdsResult(merged.customer_id,
                     {e.id: e.dsky for e, out in zip(entries, ud) if not out})


# -- engine ----------------------------------------------------------------------


@dataclass
class _ProductPart:
    products: ProductSet
    tree: RTree | None


@dataclass
class _CustomerPart:
    customers: CustomerSet
    tree: RTree | None


class ParallelEngine:
    """Partitioned indexes plus a pool of ``k`` worker threads.

    Partitions and their trees are built once and never mutated; each
    query's tasks only read them.  The pool lives as long as the engine;
    use it as a context manager or call :meth:`close` to release it early.
    """

    def __init__(self, products: ProductSet, customers: CustomerSet, k: int = 4,
                 policy: str = ROUND_ROBIN, max_entries: int = 50):
        if len(products) and len(customers) and products.dim != customers.dim:
            raise DimensionError(f"products d={products.dim}, customers d={customers.dim}")
        self.products = products
        self.customers = customers
        self.k = k
        self.policy = policy
        self.max_entries = max_entries
        pparts = partition(products, k, policy) if len(products) else []
        cparts = partition(customers, k, policy) if len(customers) else []
        self._ex = ThreadPoolExecutor(max_workers=k)
        self.product_parts = list(self._ex.map(self._product_part, pparts))
        self.customer_parts = list(self._ex.map(self._customer_part, cparts))
        self._customer_rows = {int(i): r for r, i in enumerate(customers.ids)}

    def _product_part(self, part: Partition) -> _ProductPart:
        return _ProductPart(part.data, build_tree(part.data, self.max_entries))

    def _customer_part(self, part: Partition) -> _CustomerPart:
        data = part.data
        return _CustomerPart(data, RTree(data.coords, data.ids, None, self.max_entries))

    def close(self) -> None:
        self._ex.shutdown(wait=True)

    def __enter__(self) -> "ParallelEngine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def dim(self) -> int:
        return self.products.dim if len(self.products) else self.customers.dim

    @property
    def product_trees(self) -> list[RTree]:
        return [p.tree for p in self.product_parts if p.tree is not None]

    def _check_query(self, q: ProbPoint) -> None:
        if q.dim != self.dim:
            raise DimensionError(f"query has d={q.dim}, data d={self.dim}")
        if q.id in self.products:
            raise ValueError(f"query id {q.id} collides with a product id")

    def urs(self, q: ProbPoint, mode: str = "parallel", *, ex: Executor | None = None) -> UrsResult:
        self._check_query(q)
        ex = self._ex if ex is None else ex
        optimized = _is_optimized(mode)
        t0 = time.perf_counter()

        def round1(part: _ProductPart):
            counters: dict = {}
            loc = local_umsl(q, part.products, optimized=optimized,
                             max_entries=self.max_entries, counters=counters)
            return loc, counters

        locals_ = list(ex.map(round1, self.product_parts))
        umsl = merge_umsl(q, [loc for loc, _ in locals_])
        t1 = time.perf_counter()
        trees = self.product_trees

        def round2(part: _CustomerPart):
            counters: dict = {}
            res = compute_urs(q, umsl, part.tree, optimized=optimized,
                              products=trees or None, counters=counters)
            return res.customers, counters

        results = list(ex.map(round2, self.customer_parts))
        t2 = time.perf_counter()
        counters: dict = {}
        for _, cnt in locals_ + results:
            for key, v in cnt.items():
                counters[key] = counters.get(key, 0) + v
        customers = sorted(i for ids, _ in results for i in ids)
        return UrsResult(q, customers, umsl, counters,
                         {"umsl": (t1 - t0) * 1e3, "urs": (t2 - t1) * 1e3})

    def influence(self, q: ProbPoint, mode: str = "parallel") -> InfluenceReport:
        ex = self._ex
        res = self.urs(q, mode, ex=ex)
        t0 = time.perf_counter()
        cids = res.customers
        if not cids:
            res.timings_ms["influence"] = 0.0
            return InfluenceReport(0.0, [], res)
        coords = self.customers.coords[[self._customer_rows[i] for i in cids]]

        # phase 1: every partition splits every URS member's skyline
        def split_all(part: _ProductPart):
            return local_uds_split_many(coords, part.tree, cids)

        per_part = list(ex.map(split_all, self.product_parts))

        # phase 2: per-customer merge (atomic per customer)
        def merge_one(i: int):
            return merge_uds(coords[i], [splits[i] for splits in per_part], q)

        merged = list(ex.map(merge_one, range(len(cids))))

        # phase 3: every partition reports dominators of every scan point
        def resolve_part(part: _ProductPart):
            return [dominators_in_partition_many(coords[i], [e.coords for e in m.scan], part.tree)
                    for i, m in enumerate(merged)]

        found = list(ex.map(resolve_part, self.product_parts))

        def finish(i: int):
            return resolve_uds(coords[i], merged[i], [f[i] for f in found], q)

        final = list(ex.map(finish, range(len(cids))))
        tau, per = 0.0, []
        for cid, uds in zip(cids, final):
            score = uds.total()
            if q.id not in uds.members or score <= 0.0:
                raise AssertionError(f"query missing from UDS of URS member {cid}")
            fav = uds.members[q.id] / score
            tau += fav
            per.append((cid, fav, score))
        res.timings_ms["influence"] = (time.perf_counter() - t0) * 1e3
        return InfluenceReport(tau, per, res)


def parallel_urs(q: ProbPoint, products: ProductSet, customers: CustomerSet, k: int = 4, *,
                 policy: str = ROUND_ROBIN, mode: str = "parallel", max_entries: int = 50) -> UrsResult:
    with ParallelEngine(products, customers, k, policy, max_entries) as eng:
        return eng.urs(q, mode)


def parallel_influence(q: ProbPoint, products: ProductSet, customers: CustomerSet, k: int = 4, *,
                       policy: str = ROUND_ROBIN, mode: str = "parallel",
                       max_entries: int = 50) -> InfluenceReport:
    with ParallelEngine(products, customers, k, policy, max_entries) as eng:
        return eng.influence(q, mode)
