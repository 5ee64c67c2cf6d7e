"""Index-based uncertain reverse skyline and influence score.

The query runs in two best-first passes.  The first walks the
probability-augmented midpoint tree and collects the uncertain midpoint
skyline (UMSL); the second walks the customer tree and discards every
customer whose node is dominated by a UMSL member of the same orthant.

A UMSL member only enters the set when its product's probability passes the
pairwise guard ``Pr(q) * (1 - Pr(p)) < Pr(p)``.  That guard is sufficient for
exclusion but not necessary: q can lose to a dominating product whose own
guard fails once q's other dominators have shrunk q's dynamic skyline
probability.  Customers that survive both passes are therefore candidates,
and a refinement step settles each one exactly with a range query over the
raw product tree.  Pruning never removes a true member.
"""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .core import (
    CustomerSet,
    DimensionError,
    Midpoint,
    ProbPoint,
    ProductSet,
    code_to_bits,
    dominance_matrix,
    orthant_codes,
    prob_guard,
)
from .dominance import UdsResult
from .index import MIXED, MinHeap, Node, RTree, build_tree, midpoint_tree, node_code

SERIAL = "serial"
OPTIMIZED = "opt"
SMALL_TREE = 256  # uds_search scans trees up to this size directly


def _gap(q: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Per-dimension distance from q to the box, i.e. |near corner - q|."""
    return np.maximum(low - q, 0.0) + np.maximum(q - high, 0.0)


def _far(q: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    return np.maximum(np.abs(low - q), np.abs(high - q))


class _OrthantFilter:
    """UMSL members grouped by orthant, stored as distance vectors |m - q|."""

    def __init__(self):
        self._rows = defaultdict(list)
        self._arr = {}

    def add(self, code: int, dist: np.ndarray) -> None:
        self._rows[code].append(dist)
        self._arr.pop(code, None)

    def _members(self, code: int):
        arr = self._arr.get(code)
        if arr is None:
            rows = self._rows.get(code)
            if not rows:
                return None
            arr = self._arr[code] = np.array(rows)
        return arr

    def dominates(self, code: int, dist: np.ndarray) -> bool:
        if code == MIXED:
            return False
        a = self._members(code)
        if a is None:
            return False
        return bool(((a <= dist).all(axis=1) & (a < dist).any(axis=1)).any())

    def weakly_covers(self, code: int, dist: np.ndarray) -> bool:
        # dominance with ties allowed; used to stay conservative on boundaries
        if code == MIXED:
            return False
        a = self._members(code)
        return a is not None and bool((a <= dist).all(axis=1).any())

    def dominated_mask(self, codes: np.ndarray, dists: np.ndarray) -> np.ndarray:
        out = np.zeros(len(codes), dtype=bool)
        for code in np.unique(codes):
            a = self._members(int(code))
            if a is None:
                continue
            sel = codes == code
            out[sel] = dominance_matrix(a, dists[sel]).any(axis=0)
        return out


@dataclass
class UmslSet:
    query: np.ndarray
    coords: np.ndarray
    source_ids: np.ndarray
    source_probs: np.ndarray
    codes: np.ndarray

    def __len__(self) -> int:
        return len(self.source_ids)

    @property
    def members(self) -> list[Midpoint]:
        return [Midpoint(tuple(map(float, m)), int(i), float(p))
                for m, i, p in zip(self.coords, self.source_ids, self.source_probs)]

    def by_orthant(self) -> dict[str, list[Midpoint]]:
        out = defaultdict(list)
        d = len(self.query)
        for code, m in zip(self.codes, self.members):
            out[code_to_bits(int(code), d)].append(m)
        return dict(out)

    def filter(self) -> _OrthantFilter:
        f = _OrthantFilter()
        for code, m in zip(self.codes, self.coords):
            f.add(int(code), np.abs(m - self.query))
        return f

    @classmethod
    def empty(cls, q) -> "UmslSet":
        q = np.asarray(q, dtype=np.float64)
        return cls(q, np.empty((0, len(q))), np.empty(0, np.int64), np.empty(0), np.empty(0, np.int64))


@dataclass
class UrsResult:
    query: ProbPoint
    customers: list[int]
    umsl: UmslSet
    counters: dict = field(default_factory=dict)
    timings_ms: dict = field(default_factory=dict)


@dataclass
class InfluenceReport:
    tau: float
    per_customer: list[tuple[int, float, float]]  # (customer id, Pr_fav(q), sum of dsky over UDS)
    urs: UrsResult


# -- phase 1: uncertain midpoint skyline --------------------------------------


def compute_umsl(q: ProbPoint, pr_tree: RTree | None, *, optimized: bool = False,
                 counters: dict | None = None, trace: list | None = None) -> UmslSet:
    """Best-first UMSL over a midpoint tree built w.r.t. ``q``.

    With ``optimized`` the heap is additionally thinned by node-to-node
    pruning: a queued node is dropped when another queued node of the same
    orthant has its far corner dominating the first one's near corner and
    passes the probability guard with its minimum probability.
    """
    qc = np.asarray(q.coords, dtype=np.float64)
    counters = {} if counters is None else counters
    for key in ("pr_visited", "pr_pruned", "pr_n2n_dropped"):
        counters.setdefault(key, 0)
    if pr_tree is None:
        return UmslSet.empty(qc)
    if pr_tree.dim != len(qc):
        raise DimensionError(f"query has d={len(qc)}, tree d={pr_tree.dim}")

    prq = q.prob
    coords, probs = pr_tree.coords, pr_tree.probs
    members = _OrthantFilter()
    out_rows, out_codes = [], []
    heap = MinHeap(record=trace is not None)
    live = defaultdict(dict)  # orthant -> nid -> (far, near, guard ok); optimized only
    dropped = set()

    def push_node(n: Node):
        low, high = n.low, n.high
        gap = _gap(qc, low, high)
        heap.push(float(gap @ gap), (0, n.nid), n)

    def register(n: Node):
        code = node_code(qc, n.low, n.high)
        if code == MIXED:
            return
        far, near = _far(qc, n.low, n.high), _gap(qc, n.low, n.high)
        # a node can only stand in for UMSL members if all of its midpoints
        # are eligible: guard passes and no coordinate is tied with q
        ok = bool(prob_guard(prq, n.prob_min)) and bool((near > 0).all())
        bucket = live[code]
        for other, (ofar, onear, ook) in bucket.items():
            if ook and (ofar <= near).all() and (ofar < near).any():
                dropped.add(n.nid)
                counters["pr_n2n_dropped"] += 1
                return
        if ok:
            for other in [o for o, (_, onear, _) in bucket.items()
                          if (far <= onear).all() and (far < onear).any()]:
                del bucket[other]
                dropped.add(other)
                counters["pr_n2n_dropped"] += 1
        bucket[n.nid] = (far, near, ok)

    push_node(pr_tree.root)
    while heap:
        _, item = heap.pop()
        if isinstance(item, Node):
            code = node_code(qc, item.low, item.high)
            if optimized:
                if item.nid in dropped:
                    continue
                live.get(code, {}).pop(item.nid, None)
            if members.dominates(code, _gap(qc, item.low, item.high)):
                counters["pr_pruned"] += 1
                continue
            counters["pr_visited"] += 1
            if item.is_leaf:
                rows = item.rows
                t = np.abs(coords[rows] - qc)
                codes = orthant_codes(qc, coords[rows])
                gone = members.dominated_mask(codes, t)
                counters["pr_pruned"] += int(gone.sum())
                keys = (t * t).sum(axis=1)
                for r, k in zip(rows[~gone].tolist(), keys[~gone].tolist()):
                    heap.push(k, (1, r), r)
            else:
                for child in item.children:
                    push_node(child)
                if optimized:
                    for child in item.children:
                        register(child)
        else:
            r = item
            t = np.abs(coords[r] - qc)
            code = int(orthant_codes(qc, coords[r]))
            if members.dominates(code, t):
                counters["pr_pruned"] += 1
                continue
            # a midpoint sharing a coordinate with q does not mirror product
            # dominance exactly; leaving it out only weakens pruning
            if prob_guard(prq, probs[r]) and (t > 0).all():
                members.add(code, t)
                out_rows.append(r)
                out_codes.append(code)
    if trace is not None:
        trace.extend(heap.popped)
    rows = np.array(out_rows, dtype=np.int64)
    return UmslSet(qc, coords[rows].reshape(-1, len(qc)), pr_tree.ids[rows],
                   probs[rows], np.array(out_codes, dtype=np.int64))


def compute_umsl_optimized(q: ProbPoint, pr_tree: RTree | None, **kw) -> UmslSet:
    return compute_umsl(q, pr_tree, optimized=True, **kw)


# -- phase 2: customer pass ---------------------------------------------------


def compute_urs(q: ProbPoint, umsl: UmslSet, cr_tree: RTree | None, *, optimized: bool = False,
                products: RTree | None = None, counters: dict | None = None,
                trace: list | None = None) -> UrsResult:
    """Walk the customer tree, pruning nodes dominated by a same-orthant UMSL
    member.  With ``optimized`` a node whose far corner no member reaches is
    admitted whole.  When ``products`` (the raw product tree) is given the
    surviving candidates are refined to the exact result."""
    qc = np.asarray(q.coords, dtype=np.float64)
    counters = {} if counters is None else counters
    for key in ("cr_visited", "cr_pruned", "cr_admitted_nodes", "cr_admitted_customers"):
        counters.setdefault(key, 0)
    found = []
    if cr_tree is not None:
        if cr_tree.dim != len(qc):
            raise DimensionError(f"query has d={len(qc)}, customers d={cr_tree.dim}")
        filt = umsl.filter()
        heap = MinHeap(record=trace is not None)
        root = cr_tree.root
        g = _gap(qc, root.low, root.high)
        heap.push(float(g @ g), root.nid, root)
        while heap:
            _, n = heap.pop()
            code = node_code(qc, n.low, n.high)
            if filt.dominates(code, _gap(qc, n.low, n.high)):
                counters["cr_pruned"] += 1
                continue
            if optimized and code != MIXED and not filt.weakly_covers(code, _far(qc, n.low, n.high)):
                rows = cr_tree.subtree_rows(n)
                found.append(rows)
                counters["cr_admitted_nodes"] += 1
                counters["cr_admitted_customers"] += len(rows)
                continue
            counters["cr_visited"] += 1
            if n.is_leaf:
                # the UMSL is fixed during this pass, so a leaf's customers
                # can be settled together without changing the outcome
                pts = cr_tree.coords[n.rows]
                gone = filt.dominated_mask(orthant_codes(qc, pts), np.abs(pts - qc))
                counters["cr_pruned"] += int(gone.sum())
                found.append(n.rows[~gone])
            else:
                for child in n.children:
                    g = _gap(qc, child.low, child.high)
                    heap.push(float(g @ g), child.nid, child)
        if trace is not None:
            trace.extend(heap.popped)
    rows = np.concatenate(found) if found else np.empty(0, dtype=np.int64)
    counters["candidates"] = len(rows)
    if products is not None and len(rows):
        keep = refine_candidates(q, cr_tree.coords[rows], products)
        counters["refined_out"] = int((~keep).sum())
        rows = rows[keep]
    ids = [] if cr_tree is None else sorted(int(i) for i in cr_tree.ids[rows])
    return UrsResult(q, ids, umsl, counters)


def compute_urs_optimized(q: ProbPoint, umsl: UmslSet, cr_tree: RTree | None, **kw) -> UrsResult:
    return compute_urs(q, umsl, cr_tree, optimized=True, **kw)


def refine_candidates(q: ProbPoint, cust: np.ndarray, products: RTree | list[RTree]) -> np.ndarray:
    """Exact membership test for candidate customers.

    ``products`` is the raw product tree, or a list of partition trees whose
    union is the product set.  Every product dominating q w.r.t. c is found by
    a range query; their own dominators are necessarily among them, so each
    dynamic skyline probability is computed within that set, in blocks of
    bounded memory and stopping at the first winner.
    """
    trees = products if isinstance(products, list) else [products]
    qc = np.asarray(q.coords, dtype=np.float64)
    keep = np.ones(len(cust), dtype=bool)
    for k, c in enumerate(cust):
        coords, probs = [], []
        for tree in trees:
            rows = tree.dominators_of(c, qc)
            if len(rows):
                coords.append(tree.coords[rows])
                probs.append(tree.probs[rows])
        if not coords:
            continue
        keep[k] = not _some_dominator_wins(q, np.abs(np.concatenate(coords) - c),
                                           np.concatenate(probs))
    return keep


def _some_dominator_wins(q: ProbPoint, t: np.ndarray, pr: np.ndarray, block: int = 1 << 24) -> bool:
    """Whether some product dominating q (distance vectors ``t``) has a
    dynamic skyline probability at least q's.  Products passing the guard
    win outright; the rest are settled nearest first in bounded blocks."""
    if prob_guard(q.prob, pr).any():
        return True
    dsky_q = q.prob * np.prod(1.0 - pr)
    cand = np.flatnonzero(pr >= dsky_q)  # dsky(p) <= Pr(p)
    cand = cand[np.argsort(t[cand].sum(axis=1), kind="stable")]
    keep = 1.0 - pr
    step = max(1, block // (len(t) * t.shape[1]))
    for s in range(0, len(cand), step):
        cols = cand[s:s + step]
        dm = dominance_matrix(t, t[cols])
        dsky = pr[cols] * np.prod(np.where(dm, keep[:, None], 1.0), axis=0)
        if (dsky >= dsky_q).any():
            return True
    return False


# -- uncertain dynamic skyline with probabilities ----------------------------------


@dataclass
class UdsEntry:
    id: int
    coords: np.ndarray
    prob: float
    dsky: float
    n_dominators: int


def uds_search(c, tree: RTree | None, extra: ProbPoint | None = None, *,
               scan_limit: int = SMALL_TREE) -> list[UdsEntry]:
    """Uncertain dynamic skyline of customer ``c`` over the tree's products,
    plus ``extra`` (the query) when given.

    Trees of at most ``scan_limit`` products are scanned directly.  Larger
    trees are walked as follows.

    A best-first walk from ``c`` discards products that some already-seen
    product dominates while passing the probability guard; such products can
    never be UD-undominated.  Dynamic skyline probabilities are then computed
    exactly for the survivors from one range query, and the survivors are
    filtered by UD-dominance among themselves.
    """
    c = np.asarray(c, dtype=np.float64)
    d = len(c)
    seen_t, seen_pr, seen_pts, seen_ids = [], [], [], []
    kt = np.empty((0, d))
    kp = np.empty(0)

    def absorb(pts, pr, ids):
        nonlocal kt, kp
        t = np.abs(pts - c)
        seen_t.append(t)
        seen_pr.append(pr)
        seen_pts.append(pts)
        seen_ids.append(ids)
        kt, kp = _merge_killers(kt, kp, t, pr)

    heap = MinHeap()
    if tree is not None:
        if tree.dim != d:
            raise DimensionError(f"customer has d={d}, products d={tree.dim}")
        g = _gap(c, tree.root.low, tree.root.high)
        heap.push(float(g @ g), (0, tree.root.nid), tree.root)
    if extra is not None:
        qc = np.asarray(extra.coords, dtype=np.float64)
        if len(qc) != d:
            raise DimensionError(f"query has d={len(qc)}, customer d={d}")
        tq = qc - c
        heap.push(float(tq @ tq), (1, 0), extra)
    if tree is not None and len(tree) <= scan_limit:
        # the walk costs more than it saves: take every product as a survivor
        pts, pr, ids = tree.coords, tree.probs, tree.ids
        if extra is not None:
            pts = np.vstack([pts, qc])
            pr = np.append(pr, extra.prob)
            ids = np.append(ids, extra.id)
        t = np.abs(pts - c)
    else:
        while heap:
            _, item = heap.pop()
            if isinstance(item, ProbPoint):
                absorb(np.array([item.coords]), np.array([item.prob]), np.array([item.id]))
                continue
            if len(kt):
                gap = _gap(c, item.low, item.high)
                hit = (kt <= gap).all(axis=1) & (kt < gap).any(axis=1) & prob_guard(item.prob_max, kp)
                if hit.any():
                    continue
            if item.is_leaf:
                absorb(tree.coords[item.rows], tree.probs[item.rows], tree.ids[item.rows])
            else:
                g = np.maximum(item.child_low - c, 0.0) + np.maximum(c - item.child_high, 0.0)
                for key, child in zip((g * g).sum(axis=1).tolist(), item.children):
                    heap.push(key, (0, child.nid), child)

        if not seen_t:
            return []
        # The killer set is Pareto-minimal over (distance, probability) among all
        # seen products, so it kills exactly what the full seen set would kill.
        t = np.concatenate(seen_t)
        pr = np.concatenate(seen_pr)
        killed = (dominance_matrix(kt, t) & prob_guard(pr[None, :], kp[:, None])).any(axis=0)
        live = ~killed
        t, pr = t[live], pr[live]
        pts = np.concatenate(seen_pts)[live]
        ids = np.concatenate(seen_ids)[live]
    dsky, ndom = _dsky_many(c, t, pr, tree, extra)
    ud = dominance_matrix(t, t) & (dsky[:, None] >= dsky[None, :])
    keep = ~ud.any(axis=0)
    return [UdsEntry(int(i), p, float(a), float(s), int(n))
            for i, p, a, s, n in zip(ids[keep], pts[keep], pr[keep], dsky[keep], ndom[keep])]


def _covers(at, ap, bt, bp) -> np.ndarray:
    """``out[i, j]``: killer ``a[i]`` is at least as close in every dimension
    and at least as probable as ``b[j]``, so ``b[j]`` adds no pruning power."""
    out = ap[:, None] >= bp[None, :]
    for k in range(at.shape[1]):
        out &= at[:, k, None] <= bt[None, :, k]
    return out


def _merge_killers(kt, kp, t, p):
    """Add points to a Pareto-minimal killer set."""
    if len(kp):
        fresh = ~_covers(kt, kp, t, p).any(axis=0)
        t, p = t[fresh], p[fresh]
        if not len(p):
            return kt, kp
    if len(p) > 1:
        cov = _covers(t, p, t, p)
        # among identical entries keep the first
        cov &= np.tri(len(p), k=-1, dtype=bool).T | ~cov.T
        keep = ~cov.any(axis=0)
        t, p = t[keep], p[keep]
    if len(kp):
        old = ~_covers(t, p, kt, kp).any(axis=0)
        kt, kp = kt[old], kp[old]
    return np.vstack([kt, t]), np.concatenate([kp, p])


def _dsky_many(c, t, pr, tree, extra, block: int = 1 << 22):
    """Exact dynamic skyline probabilities (and dominator counts) for points
    with distance vectors ``t`` w.r.t. ``c``, over the tree plus ``extra``."""
    # factors are multiplied in product row order with the query last, then
    # applied to Pr, matching the reference evaluation operation for operation
    keep_all = np.ones(len(t))
    ndom = np.zeros(len(t), dtype=np.int64)
    if tree is not None:
        reach = t.max(axis=0)
        rows = tree.range_query(c - reach, c + reach)
        if len(rows):
            tr = np.abs(tree.coords[rows] - c)
            keep = 1.0 - tree.probs[rows]
            step = max(1, block // max(1, len(rows) * t.shape[1]))
            for s in range(0, len(t), step):
                dm = dominance_matrix(tr, t[s:s + step])
                keep_all[s:s + step] = np.prod(np.where(dm, keep[:, None], 1.0), axis=0)
                ndom[s:s + step] += dm.sum(axis=0)
    if extra is not None:
        tq = np.abs(np.asarray(extra.coords) - c)
        dm = dominance_matrix(tq[None, :], t)[0]
        keep_all[dm] *= 1.0 - extra.prob
        ndom += dm
    return pr * keep_all, ndom


def compute_uds_with_probs(c, products: ProductSet | RTree, query: ProbPoint | None = None,
                           customer_id: int | None = None) -> UdsResult:
    """Uncertain dynamic skyline of ``c`` with each member's dynamic skyline
    probability.  ``products`` may already contain the query as a member, or
    the query can be passed separately."""
    if isinstance(products, ProductSet):
        tree = build_tree(products) if len(products) else None
    else:
        tree = products
    entries = uds_search(c, tree, query)
    return UdsResult(customer_id, {e.id: e.dsky for e in entries})


# -- engine -------------------------------------------------------------------------


class UrsEngine:
    """Holds the query-independent indexes for one product/customer pair.

    The raw product tree and the customer tree are built once; each query
    builds its own midpoint tree.
    """

    def __init__(self, products: ProductSet, customers: CustomerSet, max_entries: int = 50):
        if len(products) and len(customers) and products.dim != customers.dim:
            raise DimensionError(f"products d={products.dim}, customers d={customers.dim}")
        self.products = products
        self.customers = customers
        self.max_entries = max_entries
        self.product_tree = build_tree(products, max_entries) if len(products) else None
        self.customer_tree = (RTree(customers.coords, customers.ids, None, max_entries)
                              if len(customers) else None)

    @property
    def dim(self) -> int:
        return self.products.dim if len(self.products) else self.customers.dim

    def _check_query(self, q: ProbPoint) -> None:
        if q.dim != self.dim:
            raise DimensionError(f"query has d={q.dim}, data d={self.dim}")
        if q.id in self.products:
            raise ValueError(f"query id {q.id} collides with a product id")

    def urs(self, q: ProbPoint, mode: str = SERIAL, *, refine: bool = True,
            trace: dict | None = None) -> UrsResult:
        self._check_query(q)
        optimized = _is_optimized(mode)
        counters: dict = {}
        t0 = time.perf_counter()
        pr_tree = (midpoint_tree(q.coords, self.products, self.max_entries)
                   if len(self.products) else None)
        t1 = time.perf_counter()
        umsl = compute_umsl(q, pr_tree, optimized=optimized, counters=counters,
                            trace=None if trace is None else trace.setdefault("umsl", []))
        t2 = time.perf_counter()
        res = compute_urs(q, umsl, self.customer_tree, optimized=optimized,
                          products=self.product_tree if refine else None, counters=counters,
                          trace=None if trace is None else trace.setdefault("urs", []))
        t3 = time.perf_counter()
        res.timings_ms = {"build": (t1 - t0) * 1e3, "umsl": (t2 - t1) * 1e3, "urs": (t3 - t2) * 1e3}
        return res

    def uds(self, c, q: ProbPoint | None = None, customer_id: int | None = None) -> UdsResult:
        return UdsResult(customer_id, {e.id: e.dsky for e in uds_search(c, self.product_tree, q)})

    def influence(self, q: ProbPoint, mode: str = SERIAL) -> InfluenceReport:
        res = self.urs(q, mode)
        t0 = time.perf_counter()
        rows = {int(i): k for k, i in enumerate(self.customers.ids)}
        tau, per = 0.0, []
        for cid in res.customers:
            c = self.customers.coords[rows[cid]]
            uds = self.uds(c, q, cid)
            score = uds.total()
            if q.id not in uds.members or score <= 0.0:
                raise AssertionError(f"query missing from UDS of URS member {cid}")
            fav = uds.members[q.id] / score
            tau += fav
            per.append((cid, fav, score))
        res.timings_ms["influence"] = (time.perf_counter() - t0) * 1e3
        return InfluenceReport(tau, per, res)

    def naive_influence(self, q: ProbPoint) -> InfluenceReport:
        """Baseline: the uncertain dynamic skyline of every customer, no
        reverse-skyline pruning."""
        self._check_query(q)
        t0 = time.perf_counter()
        per = []
        for cid, c in zip(self.customers.ids, self.customers.coords):
            uds = self.uds(c, q, int(cid))
            if q.id in uds.members:
                score = uds.total()
                per.append((int(cid), uds.members[q.id] / score, score))
        per.sort()
        tau = sum(fav for _, fav, _ in per)
        members = [cid for cid, _, _ in per]
        res = UrsResult(q, sorted(members), UmslSet.empty(q.coords), {},
                        {"influence": (time.perf_counter() - t0) * 1e3})
        return InfluenceReport(tau, per, res)


def _is_optimized(mode: str) -> bool:
    if mode in (SERIAL, "parallel"):
        return False
    if mode in (OPTIMIZED, "optimized", "parallel-opt"):
        return True
    raise ValueError(f"unknown mode {mode!r}")


def uncertain_reverse_skyline(q: ProbPoint, products: ProductSet, customers: CustomerSet,
                              mode: str = SERIAL, max_entries: int = 50) -> UrsResult:
    return UrsEngine(products, customers, max_entries).urs(q, mode)


def influence_score(q: ProbPoint, products: ProductSet, customers: CustomerSet,
                    mode: str = SERIAL, max_entries: int = 50) -> InfluenceReport:
    return UrsEngine(products, customers, max_entries).influence(q, mode)
