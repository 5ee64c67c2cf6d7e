"""Why the index matters: index-based answers against exhaustive baselines.

The naive reverse skyline checks every customer against every product; the
naive influence score computes every customer's skyline.  The index prunes
whole regions of customers at once.

    python3 demos/04_index_vs_naive.py [n]
"""

import statistics
import sys
import time

import numpy as np

from urskyline import GenSpec, ProbPoint, UrsEngine, generate, urs_brute

n = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
products = generate(GenSpec("products", "UN", n, 2, seed=11))
customers = generate(GenSpec("customers", "UN", n, 2, seed=12))
engine = UrsEngine(products, customers, max_entries=50)
rng = np.random.default_rng(0)
queries = [ProbPoint(rng.random(2), rng.uniform(0.05, 1.0)) for _ in range(3)]


def median_ms(fn):
    times, out = [], None
    for q in queries:
        t = time.perf_counter()
        out = fn(q)
        times.append((time.perf_counter() - t) * 1e3)
    return statistics.median(times), out


idx_urs, _ = median_ms(lambda q: engine.urs(q).customers)
naive_urs, _ = median_ms(lambda q: urs_brute(q, products, customers))
idx_inf, _ = median_ms(lambda q: engine.influence(q).tau)
naive_inf, _ = median_ms(lambda q: engine.naive_influence(q).tau)
for q in queries:
    assert engine.urs(q).customers == urs_brute(q, products, customers)
    assert abs(engine.influence(q).tau - engine.naive_influence(q).tau) <= 1e-9

print(f"|P| = |C| = {n}, d = 2, median of {len(queries)} queries")
print(f"  reverse skyline: index {idx_urs:8.1f} ms   naive {naive_urs:9.1f} ms   ({naive_urs / idx_urs:.0f}x)")
print(f"  influence score: index {idx_inf:8.1f} ms   naive {naive_inf:9.1f} ms   ({naive_inf / idx_inf:.0f}x)")
