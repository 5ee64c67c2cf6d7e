"""How the parallel engine splits and merges work.

Products are partitioned among workers.  Each worker computes a local UMSL;
the coordinator merges them into the global one.  For the influence score
each worker splits a customer's skyline into points with no local dominator
and points that still need checking; the coordinator merges the splits and
asks every worker for the dominators of the remaining points.

    python3 demos/03_parallel_merge.py
"""

from urskyline import GenSpec, ParallelEngine, ProbPoint, generate, partition, wine_fixture
from urskyline.index import build_tree
from urskyline.parallel import (
    dominators_in_partition,
    local_uds_split,
    local_umsl,
    merge_umsl,
    merge_uds,
    resolve_uds,
)

wines, customers = wine_fixture()
q = ProbPoint(wines.get(1).coords, wines.get(1).prob)
others = wines.without(1)

parts = partition(others, 2)
print("Round-robin partitions of W \\ {w1}:", [p.data.ids.tolist() for p in parts])
locals_ = [local_umsl(q, p.data) for p in parts]
for p, loc in zip(parts, locals_):
    print(f"  worker {p.index}: local UMSL sources {loc.source_ids.tolist()}")
print("Merged UMSL sources:", merge_umsl(q, locals_).source_ids.tolist())

c1 = customers.coords[0]
trees = [build_tree(p.data) for p in parts]
splits = [local_uds_split(c1, t, 1) for t in trees]
for p, s in zip(parts, splits):
    print(f"  worker {p.index} for c1: no local dominator {[e.id for e in s.uds_local]}, "
          f"needs checking {[(e.id, round(e.dsky, 3)) for e in s.udsscan_local]}")
merged = merge_uds(c1, splits, q)
found = [[dominators_in_partition(c1, e.coords, t) for e in merged.scan] for t in trees]
final = resolve_uds(c1, merged, found, q)
print("UDS of c1 over W \\ {w1} plus q:", {k: round(v, 3) for k, v in sorted(final.members.items())})

# The answer does not depend on the number of workers or the partition policy.
P = generate(GenSpec("products", "AC", 3000, 2, seed=7))
C = generate(GenSpec("customers", "AC", 3000, 2, seed=8))
q = ProbPoint((0.5, 0.5), 0.6)
print("\nAC 3000x3000, query (0.5, 0.5):")
for policy in ("round_robin", "contiguous"):
    for k in (1, 2, 4, 8):
        with ParallelEngine(P, C, k, policy) as eng:
            rep = eng.influence(q, "parallel-opt")
        print(f"  {policy:11s} k={k}: |URS|={len(rep.urs.customers)} tau={rep.tau!r}")
