"""Acceptance criteria 1-8.

Each test prints one ``criterion N: PASS|FAIL`` line; the lines are repeated
in an "acceptance criteria" section at the end of the pytest report.  Run on
its own with ``python3 tests/test_acceptance.py`` (or ``pytest -s`` on this
file).
"""

import csv
import statistics
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from helpers import PROPERTY_OUTCOMES, report

from urskyline import (
    GenSpec,
    ParallelEngine,
    ProbPoint,
    UrsEngine,
    compute_umsl,
    dsky_probability,
    generate,
    influence_brute,
    midpoint_tree,
    uds_brute,
    urs_brute,
    wine_fixture,
)
from urskyline.cli import main as cli_main
from urskyline.core import orthant_codes
from urskyline.index import build_tree
from urskyline.parallel import CONTIGUOUS, ROUND_ROBIN
from urskyline.query import refine_candidates

DISTS = ("UN", "CO", "AC")
DIMS = (2, 3, 4)
KS = (1, 2, 4, 8)


def grid_instance(dist, d, n=200, n_queries=50):
    """Criterion 2's fixed-seed cell: products, customers and queries."""
    seed = 1000 + 10 * DISTS.index(dist) + d
    P = generate(GenSpec("products", dist, n, d, seed))
    C = generate(GenSpec("customers", dist, n, d, seed + 500))
    rng = np.random.default_rng(seed)
    queries = [ProbPoint(rng.random(d), rng.uniform(1e-6, 1.0)) for _ in range(n_queries)]
    return P, C, queries


def query_of(products, pid):
    p = products.get(pid)
    return ProbPoint(p.coords, p.prob), products.without(pid)


# -- 1 ---------------------------------------------------------------------------


def test_criterion_1_wine_fixture():
    t0 = time.perf_counter()
    W, C = wine_fixture()
    c = {int(i): C.coords[k] for k, i in enumerate(C.ids)}
    checks = {
        "Pr_c1(w3)=0.40": dsky_probability(3, c[1], W) == 0.40,
        "Pr_c1(w6)=0.36": dsky_probability(6, c[1], W) == 0.60 * (1 - 0.40),
        "UDS(c1)": sorted(uds_brute(c[1], W).members) == [2, 3],
        "UDS(c2)": sorted(uds_brute(c[2], W).members) == [1, 2],
        "UDS(c3)": sorted(uds_brute(c[3], W).members) == [3, 5, 6],
    }
    q1, rest1 = query_of(W, 1)
    umsl = compute_umsl(q1, midpoint_tree(q1.coords, rest1))
    members = {m.source_id: m.coords for m in umsl.members}
    checks["UMSL(w1)"] = members == {2: (30.0, 80.0), 4: (35.0, 145.0), 6: (55.0, 75.0)}
    expected_urs = {1: [2], 2: [1, 2], 3: [1, 3]}
    expected_tau = {1: 0.53, 2: 1.02}
    for pid, want in expected_urs.items():
        q, rest = query_of(W, pid)
        for eng, mode in ((UrsEngine(rest, C), "serial"), (UrsEngine(rest, C), "opt"),
                          (ParallelEngine(rest, C, 2), "parallel")):
            rep = eng.influence(q, mode)
            checks[f"URS(w{pid})/{mode}"] = rep.urs.customers == want
            if pid in expected_tau:
                checks[f"tau(w{pid})/{mode}"] = abs(rep.tau - expected_tau[pid]) <= 0.01
    elapsed = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    ok = not failed and elapsed < 1.0
    report(1, ok, "wine fixture exactness",
           f"{len(checks) - len(failed)}/{len(checks)} checks"
           + (f", failed {failed}" if failed else "") + ", runtime budget 1 s", elapsed)
    assert ok


# -- 2 and 3 ---------------------------------------------------------------------


def test_criterion_2_3_oracle_equivalence_and_neutrality():
    t0 = time.perf_counter()
    queries = mismatches = opt_mismatches = 0
    worst_tau = 0.0
    for dist in DISTS:
        for d in DIMS:
            P, C, qs = grid_instance(dist, d)
            engines = [(UrsEngine(P, C), "serial"), (UrsEngine(P, C), "opt")]
            engines += [(ParallelEngine(P, C, k), m) for k in KS for m in ("parallel", "parallel-opt")]
            for q in qs:
                want, tau = urs_brute(q, P, C), influence_brute(q, P, C)
                by_mode = {}
                for eng, mode in engines:
                    rep = eng.influence(q, mode)
                    by_mode.setdefault(mode, []).append(rep.urs.customers)
                    worst_tau = max(worst_tau, abs(rep.tau - tau))
                    mismatches += rep.urs.customers != want or abs(rep.tau - tau) > 1e-9
                opt_mismatches += any(o != s for o, s in zip(by_mode["opt"] + by_mode["parallel-opt"],
                                                             by_mode["serial"] + by_mode["parallel"]))
                queries += 1
            for eng, _ in engines:
                if isinstance(eng, ParallelEngine):
                    eng.close()
    elapsed = time.perf_counter() - t0
    ok2 = mismatches == 0 and elapsed < 300
    report(2, ok2, "oracle equivalence",
           f"{queries} queries over UN/CO/AC x d=2,3,4 at 200x200, serial/opt and parallel "
           f"k=1,2,4,8 (both modes): {mismatches} mismatching runs, max |tau - oracle| = "
           f"{worst_tau:.1e}; runtime target 300 s", elapsed)

    # effectiveness: 10K uniform customers, 100 uniform products
    t1 = time.perf_counter()
    C = generate(GenSpec("customers", "UN", 10_000, 2, 32))
    P = generate(GenSpec("products", "UN", 100, 2, 31))
    eng = UrsEngine(P, C)
    rng = np.random.default_rng(3)
    fewer, same_results, rows = 0, True, []
    for _ in range(10):
        q = ProbPoint(rng.random(2), rng.uniform(0.01, 1.0))
        a, b = eng.urs(q, "serial"), eng.urs(q, "opt")
        same_results &= a.customers == b.customers
        fewer += b.counters["cr_visited"] < a.counters["cr_visited"]
        rows.append((a.counters["cr_visited"], b.counters["cr_visited"]))
    ok3 = opt_mismatches == 0 and same_results and fewer >= 1
    report(3, ok3, "optimization neutrality and effectiveness",
           f"optimized == plain on all {queries} criterion-2 queries ({opt_mismatches} differ); "
           f"10K uniform customers / 100 products: optimized expands strictly fewer customer-tree "
           f"nodes on {fewer}/10 queries (serial, opt visited: {rows})",
           elapsed + time.perf_counter() - t1)
    assert ok2 and ok3


# -- 4 ---------------------------------------------------------------------------


def test_criterion_4_parallel_determinism():
    t0 = time.perf_counter()
    bad = []
    for inst in range(10):
        P = generate(GenSpec("products", "UN", 5000, 2, 400 + inst))
        C = generate(GenSpec("customers", "UN", 5000, 2, 600 + inst))
        rng = np.random.default_rng(inst)
        q = ProbPoint(rng.random(2), rng.uniform(0.05, 1.0))
        outs = {}
        for policy in (ROUND_ROBIN, CONTIGUOUS):
            for k in KS:
                with ParallelEngine(P, C, k, policy) as eng:
                    rep = eng.influence(q, "parallel-opt" if k % 4 else "parallel")
                outs[policy, k] = (np.array(rep.urs.customers, dtype=np.int64).tobytes(), rep.tau)
        ids = {o[0] for o in outs.values()}
        taus = [o[1] for o in outs.values()]
        if len(ids) != 1 or max(taus) - min(taus) > 1e-9:
            bad.append(inst)
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 180
    report(4, ok, "parallel determinism",
           f"10 instances at 5000x5000, k=1,2,4,8 x round-robin/contiguous: "
           f"{10 - len(bad)}/10 byte-identical URS with tau spread <= 1e-9; runtime budget 180 s",
           elapsed)
    assert ok


# -- 5 ---------------------------------------------------------------------------


def test_criterion_5_relative_speedup():
    t0 = time.perf_counter()
    P = generate(GenSpec("products", "UN", 10_000, 2, 51))
    C = generate(GenSpec("customers", "UN", 10_000, 2, 52))
    eng = UrsEngine(P, C, 50)
    rng = np.random.default_rng(5)
    qs = [ProbPoint(rng.random(2), rng.uniform(0.05, 1.0)) for _ in range(3)]
    idx_urs, naive_urs, idx_inf, naive_inf = [], [], [], []
    for q in qs:
        s = time.perf_counter(); a = eng.urs(q).customers; idx_urs.append(time.perf_counter() - s)
        s = time.perf_counter(); b = urs_brute(q, P, C); naive_urs.append(time.perf_counter() - s)
        s = time.perf_counter(); ri = eng.influence(q); idx_inf.append(time.perf_counter() - s)
        s = time.perf_counter(); rn = eng.naive_influence(q); naive_inf.append(time.perf_counter() - s)
        assert a == b and abs(ri.tau - rn.tau) <= 1e-9
    m = {k: statistics.median(v) for k, v in
         dict(idx_urs=idx_urs, naive_urs=naive_urs, idx_inf=idx_inf, naive_inf=naive_inf).items()}
    r_urs, r_inf = m["naive_urs"] / m["idx_urs"], m["naive_inf"] / m["idx_inf"]
    elapsed = time.perf_counter() - t0
    ok = r_urs >= 20 and r_inf >= 20 and elapsed < 900
    report(5, ok, "relative speedup at 10K, d=2, M=50",
           f"URS median index {m['idx_urs'] * 1e3:.1f} ms vs naive {m['naive_urs'] * 1e3:.0f} ms "
           f"({r_urs:.0f}x); influence median index {m['idx_inf'] * 1e3:.1f} ms vs naive "
           f"{m['naive_inf'] * 1e3:.0f} ms ({r_inf:.0f}x); required >= 20x, budget 900 s", elapsed)
    assert ok


# -- 6 ---------------------------------------------------------------------------


def test_criterion_6_fanout_sweep(tmp_path, capsys):
    t0 = time.perf_counter()
    fanouts = (20, 30, 40, 50, 60)
    differ = total = 0
    for dist in DISTS:
        for d in DIMS:
            P, C, qs = grid_instance(dist, d)
            engines = [UrsEngine(P, C, M) for M in fanouts]
            for q in qs:
                want = urs_brute(q, P, C)
                for eng in engines:
                    for mode in ("serial", "opt"):
                        total += 1
                        differ += eng.urs(q, mode).customers != want
    out = tmp_path / "bench.csv"
    code = cli_main(["bench", "--modes", "serial", "--n", "200", "--dims", "2", "--queries", "1",
                     "--repeat", "1", "--max-entries", ",".join(map(str, fanouts)),
                     "--out", str(out)])
    capsys.readouterr()
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    per_m = sorted(int(r["max_entries"]) for r in rows)
    elapsed = time.perf_counter() - t0
    ok = differ == 0 and code == 0 and per_m == list(fanouts)
    report(6, ok, "fanout sweep",
           f"M=20..60 x serial/opt on the criterion-2 queries: {total - differ}/{total} runs equal "
           f"the oracle; bench rows per M: {per_m}", elapsed)
    assert ok


# -- 7 ---------------------------------------------------------------------------


def test_criterion_7_property_suites():
    t0 = time.perf_counter()
    outcomes = dict(PROPERTY_OUTCOMES)
    source = "this session"
    if not any(not k.endswith("enough_cases") for k in outcomes):
        source = "subprocess run"
        path = Path(__file__).with_name("test_properties.py")
        proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-rA", "-p", "no:cacheprovider",
                               str(path)], capture_output=True, text=True)
        for line in proc.stdout.splitlines():
            for word in ("PASSED", "FAILED", "ERROR", "SKIPPED"):
                if line.startswith(word + " "):
                    outcomes[line.split()[1]] = word.lower()
    n_props = sum(1 for k in outcomes if "enough_cases" not in k and "profile" not in k)
    failed = sorted(k.split("::")[-1] for k, v in outcomes.items() if v not in ("passed",))
    counted = any(k.endswith("test_every_property_ran_enough_cases") and v == "passed"
                  for k, v in outcomes.items())
    ok = n_props > 0 and not failed and counted
    report(7, ok, "property suites",
           f"{n_props} randomized properties ({source}), each >= 1000 generated cases "
           f"(case count check {'passed' if counted else 'missing/failed'}); failed: {failed or 'none'}",
           time.perf_counter() - t0)
    assert ok


# -- 8 ---------------------------------------------------------------------------


def test_criterion_8_million_scale():
    t0 = time.perf_counter()
    P = generate(GenSpec("products", "UN", 1_000_000, 2, 81))
    C = generate(GenSpec("customers", "UN", 1_000_000, 2, 82))
    q = ProbPoint((0.5, 0.5), 0.5)
    with ParallelEngine(P, C, 4, max_entries=50) as eng:
        res = eng.urs(q, "parallel-opt")
    elapsed = time.perf_counter() - t0

    # spot check: customers outside the result that the UMSL prunes must be
    # true non-members; result members must be true members
    rng = np.random.default_rng(8)
    members = set(res.customers)
    ids = C.ids
    outside = rng.choice(np.flatnonzero(~np.isin(ids, list(members))), 300, replace=False)
    filt = res.umsl.filter()
    qc = np.asarray(q.coords)
    pts = C.coords[outside]
    pruned = filt.dominated_mask(orthant_codes(qc, pts), np.abs(pts - qc))
    tree = build_tree(P)
    safe = not refine_candidates(q, pts[pruned], tree).any()
    inside = C.coords[np.isin(ids, list(members))]
    exact_members = bool(refine_candidates(q, inside, tree).all()) if len(inside) else True
    ok = elapsed < 600 and safe and exact_members
    report(8, ok, "million-scale smoke",
           f"|P|=|C|=1M, d=2, parallel-opt k=4 (1-core host): build+query {elapsed:.1f} s, "
           f"|URS|={len(members)}, |UMSL|={len(res.umsl)}; UMSL safety on {int(pruned.sum())} sampled "
           f"pruned customers: {'ok' if safe else 'VIOLATED'}; members confirmed exactly: "
           f"{'ok' if exact_members else 'NO'}; budget 600 s", elapsed)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
