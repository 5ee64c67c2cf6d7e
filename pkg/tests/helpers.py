"""Shared test helpers."""

import numpy as np

from urskyline import CustomerSet, ProbPoint, ProductSet


def as_query(products, pid):
    """Product ``pid`` as a query (query id) plus the other products."""
    p = products.get(pid)
    return ProbPoint(p.coords, p.prob), products.without(pid)


def random_instance(rng, n=None, m=None, d=None, grid=False):
    """Random products/customers/query; ``grid`` draws small integers so that
    coordinate ties are frequent."""
    n = int(rng.integers(1, 60)) if n is None else n
    m = int(rng.integers(1, 60)) if m is None else m
    d = int(rng.integers(2, 5)) if d is None else d
    draw = (lambda *s: rng.integers(0, 6, s).astype(float)) if grid else (lambda *s: rng.random(s))
    probs = rng.uniform(1e-6, 1.0, n)
    if grid:
        probs = rng.choice([0.25, 0.5, 0.75, 1.0], n)
    P = ProductSet(np.arange(n), draw(n, d), probs)
    C = CustomerSet(np.arange(m), draw(m, d))
    q = ProbPoint(draw(d), float(rng.choice([0.5, rng.uniform(1e-6, 1.0)])))
    return q, P, C


# -- acceptance bookkeeping -----------------------------------------------------

ACCEPTANCE: dict[int, str] = {}  # criterion number -> printed result line
PROPERTY_OUTCOMES: dict[str, str] = {}  # property test node id -> outcome


def report(n: int, ok: bool, title: str, detail: str, seconds: float) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {title}: {detail} [{seconds:.1f} s]"
    ACCEPTANCE[n] = line
    print(line)
