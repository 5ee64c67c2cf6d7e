"""Definitional predicates and the exhaustive reference oracle.

Everything here follows the definitions literally and scans the whole
product set.  It doubles as the naive baseline the index code is
benchmarked against, so it is vectorised over products but never uses an
index or any pruning rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CustomerSet, ProbPoint, ProductSet, _check_dims, dominance_matrix, prob_guard


@dataclass
class UdsResult:
    customer_id: int | None
    members: dict[int, float]  # product id -> dynamic skyline probability

    def total(self) -> float:
        return float(sum(self.members.values()))


def _dominators_mask(t: np.ndarray, tp: np.ndarray) -> np.ndarray:
    # t: distance vectors of all products, tp: distance vector of one product
    return (t <= tp).all(axis=1) & (t < tp).any(axis=1)


def dsky_probability(pid: int, c: Sequence[float], products: ProductSet) -> float:
    """Dynamic skyline probability of product ``pid`` w.r.t. customer ``c``."""
    k = products.index_of(pid)
    c = np.asarray(c, dtype=np.float64)
    _check_dims(c, products.coords[k])
    t = np.abs(products.coords - c)
    dom = _dominators_mask(t, t[k])
    return float(products.probs[k] * np.prod(1.0 - products.probs[dom]))


def all_dsky_probabilities(c: Sequence[float], products: ProductSet, block: int = 2048) -> np.ndarray:
    """Dynamic skyline probability of every product, in row order (O(n^2))."""
    c = np.asarray(c, dtype=np.float64)
    t = np.abs(products.coords - c)
    out = products.probs.copy()
    keep = (1.0 - products.probs)[:, None]
    for s in range(0, len(t), block):
        dom = dominance_matrix(t, t[s:s + block])  # dom[i, j]: i dominates s + j
        out[s:s + block] *= np.prod(np.where(dom, keep, 1.0), axis=0)
    return out


def prob_order_condition(pr_q: float, pr_p: float) -> bool:
    """True when a product of probability ``pr_p`` that dominates the query
    is guaranteed a larger dynamic skyline probability than the query."""
    return bool(prob_guard(pr_q, pr_p))


def ud_dominates(pid: int, pid2: int, c: Sequence[float], products: ProductSet) -> bool:
    a = products.coords[products.index_of(pid)]
    b = products.coords[products.index_of(pid2)]
    c = np.asarray(c, dtype=np.float64)
    _check_dims(c, a)
    ta, tb = np.abs(a - c), np.abs(b - c)
    if not ((ta <= tb).all() and (ta < tb).any()):
        return False
    return dsky_probability(pid, c, products) >= dsky_probability(pid2, c, products)


def uds_brute(c: Sequence[float], products: ProductSet, customer_id: int | None = None) -> UdsResult:
    """Uncertain dynamic skyline of ``c``: products not UD-dominated by any other."""
    c = np.asarray(c, dtype=np.float64)
    if len(products):
        _check_dims(c, products.coords[0])
    t = np.abs(products.coords - c)
    if len(t) <= 2048:  # one matrix serves both passes
        dom = dominance_matrix(t, t)
        dsky = products.probs * np.prod(np.where(dom, (1.0 - products.probs)[:, None], 1.0), axis=0)
        keep = ~(dom & (dsky[:, None] >= dsky[None, :])).any(axis=0)
        return UdsResult(customer_id, {int(i): float(v)
                                       for i, v in zip(products.ids[keep], dsky[keep])})
    dsky = all_dsky_probabilities(c, products)
    members = {}
    for s in range(0, len(t), 2048):
        ud = dominance_matrix(t, t[s:s + 2048]) & (dsky[:, None] >= dsky[None, s:s + 2048])
        for k in np.flatnonzero(~ud.any(axis=0)) + s:
            members[int(products.ids[k])] = float(dsky[k])
    return UdsResult(customer_id, members)


def favorite_probability(pid: int, c: Sequence[float], products: ProductSet) -> float:
    uds = uds_brute(c, products)
    if pid not in uds.members:
        return 0.0
    return uds.members[pid] / uds.total()


def favorability_rating(pid: int, customers: CustomerSet, products: ProductSet) -> float:
    return float(sum(favorite_probability(pid, c, products) for c in customers.coords))


def urs_brute(q: ProbPoint, products: ProductSet, customers: CustomerSet) -> list[int]:
    """Customers whose uncertain dynamic skyline over P ∪ {q} contains q.

    A customer is rejected as soon as one product dominating q (w.r.t. that
    customer) has a dynamic skyline probability at least q's.
    """
    pool = products.with_query(q)
    if len(customers):
        _check_dims(q.coords, customers.coords[0])
    return sorted(int(cid) for cid, c in zip(customers.ids, customers.coords)
                  if _q_survives(c, pool))


def _q_survives(c, pool: ProductSet) -> bool:
    """Whether the query (last row of ``pool``) is in the uncertain dynamic
    skyline of ``c``."""
    qk = len(pool) - 1
    one_minus = 1.0 - pool.probs
    t = np.abs(pool.coords - c)
    dom_q = np.flatnonzero(_dominators_mask(t, t[qk]))
    if len(dom_q) == 0:
        return True
    dsky_q = pool.probs[qk] * np.prod(one_minus[dom_q])
    for k in dom_q:
        dsky_p = pool.probs[k] * np.prod(one_minus[_dominators_mask(t, t[k])])
        if dsky_p >= dsky_q:
            return False
    return True


def influence_brute(q: ProbPoint, products: ProductSet, customers: CustomerSet) -> float:
    """Favorability rating of q over every customer, q competing within P ∪ {q}."""
    pool = products.with_query(q)
    total = 0.0
    for cid, c in zip(customers.ids, customers.coords):
        if not _q_survives(c, pool):  # q is not a member: no contribution
            continue
        uds = uds_brute(c, pool, int(cid))
        if q.id in uds.members:
            total += uds.members[q.id] / uds.total()
    return total
