"""A walk through the six-wine example.

Six wines are described by price and sweetness; each carries a rating used as
its probability.  Three customers state their ideal wine.  We ask: for which
customers would a given wine be among the probable favourites, and how much
influence does it have overall?

    python3 demos/01_wine_walkthrough.py
"""

from urskyline import (
    ProbPoint,
    UrsEngine,
    compute_umsl,
    dsky_probability,
    midpoint_tree,
    uds_brute,
    wine_fixture,
)

wines, customers = wine_fixture()
cust = {int(i): tuple(c) for i, c in zip(customers.ids, customers.coords)}

print("Wines (price, sweetness; probability):")
for pid in wines.ids:
    w = wines.get(int(pid))
    print(f"  w{w.id}: {w.coords}  Pr={w.prob}")
print("Customers:", {f"c{k}": v for k, v in cust.items()})

# 1. From customer c1's point of view, a wine is "dominated" when another wine
#    is at least as close in price and sweetness, and strictly closer in one.
#    Its dynamic skyline probability is its own probability times the chance
#    that none of its dominators is available.
print("\nDynamic skyline probabilities w.r.t. c1:")
for pid in wines.ids:
    print(f"  w{pid}: {dsky_probability(int(pid), cust[1], wines):.3f}")

# 2. The uncertain dynamic skyline keeps wines that no closer wine beats on
#    that probability as well.
print("\nUncertain dynamic skylines:")
for cid, c in cust.items():
    uds = uds_brute(c, wines, cid)
    print(f"  c{cid}: " + ", ".join(f"w{p} ({v:.3f})" for p, v in sorted(uds.members.items())))

# 3. Treat w1 as a new product q.  The index folds every other wine onto its
#    midpoint with q; the minimal midpoints (the UMSL) outline the region of
#    customers that q cannot win.
q = ProbPoint(wines.get(1).coords, wines.get(1).prob)
others = wines.without(1)
umsl = compute_umsl(q, midpoint_tree(q.coords, others))
print("\nUMSL of w1:", ", ".join(f"m{m.source_id}={m.coords}" for m in umsl.members))

# 4. The reverse skyline and the influence score follow.
engine = UrsEngine(others, customers)
report = engine.influence(q)
print(f"URS(w1) = {['c%d' % c for c in report.urs.customers]}, influence tau = {report.tau:.3f}")
for pid in (2, 3):
    qq = ProbPoint(wines.get(pid).coords, wines.get(pid).prob)
    rep = UrsEngine(wines.without(pid), customers).influence(qq)
    print(f"URS(w{pid}) = {['c%d' % c for c in rep.urs.customers]}, influence tau = {rep.tau:.3f}")
