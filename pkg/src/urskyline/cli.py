"""Command-line front end: ``gen``, ``urs``, ``influence``, ``verify``, ``bench``.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
import time
from contextlib import contextmanager
from typing import Sequence

import numpy as np

from . import query as query_mod
from .core import CustomerSet, DimensionError, ProbPoint, ProductSet
from .data import (
    CUSTOMERS,
    DISTRIBUTIONS,
    PRODUCTS,
    DataFormatError,
    GenSpec,
    generate,
    load_csv,
    save_csv,
    wine_fixture,
)
from .dominance import influence_brute, urs_brute
from .parallel import POLICIES, ROUND_ROBIN, ParallelEngine
from .query import UrsEngine

MODES = ("serial", "opt", "parallel", "parallel-opt", "naive")
INDEX_MODES = MODES[:-1]


class UsageError(Exception):
    pass


# -- argument types ---------------------------------------------------------------


def _int_in(lo: int, hi: int):
    def parse(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
        if not lo <= v <= hi:
            raise argparse.ArgumentTypeError(f"must lie in [{lo}, {hi}], got {v}")
        return v
    return parse


def _int_list(lo: int, hi: int):
    one = _int_in(lo, hi)

    def parse(text: str) -> list[int]:
        return [one(t) for t in text.split(",") if t.strip()]
    return parse


def parse_query(text: str) -> ProbPoint:
    """``"x1,...,xd;prob"`` -> ProbPoint with the query id."""
    if ";" not in text:
        raise argparse.ArgumentTypeError(f"query needs 'coords;prob', got {text!r}")
    coords, prob = text.split(";", 1)
    try:
        return ProbPoint([float(v) for v in coords.split(",")], float(prob))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad query {text!r}: {exc}") from None


def _default_threads() -> int:
    env = os.environ.get("URSKYLINE_THREADS")
    if env is None:
        return 4
    try:
        return _int_in(1, 1024)(env)
    except argparse.ArgumentTypeError:
        return 4


# -- shared helpers ----------------------------------------------------------------


def _load_inputs(args) -> tuple[ProductSet, CustomerSet]:
    if args.fixture == "wine":
        return wine_fixture()
    if not (args.products and args.customers):
        raise UsageError("give --products and --customers, or --fixture wine")
    return load_csv(args.products, PRODUCTS), load_csv(args.customers, CUSTOMERS)


def _exclude_query_twin(q: ProbPoint, products: ProductSet, extra: Sequence[int]) -> tuple[ProductSet, list[int]]:
    """Drop the products listed with --exclude, and any product identical to
    the query: asking about an existing product means asking how it fares
    against the others."""
    drop = {int(i) for i in extra}
    if len(products) and products.dim == q.dim:
        same = (products.coords == np.asarray(q.coords)).all(axis=1) & (products.probs == q.prob)
        drop.update(int(i) for i in products.ids[same])
    for pid in sorted(drop):
        if pid in products:
            products = products.without(pid)
    return products, sorted(drop)


def _check_dims(q: ProbPoint, products: ProductSet, customers: CustomerSet) -> None:
    for name, data in (("products", products), ("customers", customers)):
        if len(data) and data.dim != q.dim:
            raise DimensionError(f"query has d={q.dim}, {name} d={data.dim}")


class Runner:
    """Builds the engine for a mode once and answers queries with it."""

    def __init__(self, products, customers, mode, threads=4, max_entries=50, policy=ROUND_ROBIN):
        self.products, self.customers, self.mode = products, customers, mode
        t0 = time.perf_counter()
        if mode in ("parallel", "parallel-opt"):
            self.engine = ParallelEngine(products, customers, threads, policy, max_entries)
        else:
            self.engine = UrsEngine(products, customers, max_entries)
        self.index_ms = (time.perf_counter() - t0) * 1e3

    def urs(self, q: ProbPoint):
        if self.mode == "naive":
            t0 = time.perf_counter()
            ids = urs_brute(q, self.products, self.customers)
            dt = (time.perf_counter() - t0) * 1e3
            return {"urs": ids, "umsl_size": None, "counters": {}, "timings_ms": {"urs": dt}}
        res = self.engine.urs(q, self.mode)
        return {"urs": res.customers, "umsl_size": len(res.umsl), "counters": res.counters,
                "timings_ms": dict(res.timings_ms)}

    def influence(self, q: ProbPoint):
        if self.mode == "naive":
            rep = self.engine.naive_influence(q)
        else:
            rep = self.engine.influence(q, self.mode)
        res = rep.urs
        return {"urs": res.customers, "umsl_size": None if self.mode == "naive" else len(res.umsl),
                "tau": rep.tau,
                "per_customer": [{"customer": c, "fav": f, "uds_total": s} for c, f, s in rep.per_customer],
                "counters": res.counters, "timings_ms": dict(res.timings_ms)}


def _timed(fn, q, repeat: int):
    """Run ``fn(q)`` ``repeat`` times; report the last payload with median
    phase timings (measured in integer microseconds, shown in ms)."""
    totals, phases, out = [], {}, None
    for _ in range(repeat):
        t0 = time.perf_counter_ns()
        out = fn(q)
        totals.append((time.perf_counter_ns() - t0) // 1000)
        for key, ms in out["timings_ms"].items():
            phases.setdefault(key, []).append(int(ms * 1000))
    out["timings_ms"] = {k: statistics.median(v) / 1000 for k, v in phases.items()}
    out["timings_ms"]["total"] = statistics.median(totals) / 1000
    return out


# -- commands --------------------------------------------------------------------


def cmd_gen(args) -> int:
    spec = GenSpec(args.kind, args.dist, args.n, args.dims, args.seed)
    data = generate(spec)
    save_csv(data, args.out)
    print(f"wrote {args.out}: kind={spec.kind} n={spec.n} d={spec.d} dist={spec.dist} seed={spec.seed}")
    return 0


def _query_command(args, task: str) -> int:
    products, customers = _load_inputs(args)
    q = args.query
    products, excluded = _exclude_query_twin(q, products, args.exclude)
    _check_dims(q, products, customers)
    runner = Runner(products, customers, args.mode, args.threads, args.max_entries, args.policy)
    out = _timed(getattr(runner, task), q, args.repeat)
    out["timings_ms"]["index"] = runner.index_ms
    payload = {"query": {"coords": list(q.coords), "prob": q.prob}, "mode": args.mode,
               "excluded_products": excluded, **out}
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_urs(args) -> int:
    return _query_command(args, "urs")


def cmd_influence(args) -> int:
    return _query_command(args, "influence")


@contextmanager
def _faulty_guard():
    """Mutation harness: make the index use an always-true probability guard."""
    saved = query_mod.prob_guard
    query_mod.prob_guard = lambda a, b: np.ones(np.broadcast(a, b).shape, dtype=bool)
    try:
        yield
    finally:
        query_mod.prob_guard = saved


def _verify_inputs(args):
    if args.fixture == "wine" or (args.products and args.customers):
        return _load_inputs(args)
    p = generate(GenSpec(PRODUCTS, args.dist, args.n, args.dims, args.seed))
    c = generate(GenSpec(CUSTOMERS, args.dist, args.m or args.n, args.dims, args.seed + 1))
    return p, c


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    products, customers = _verify_inputs(args)
    if args.fixture == "wine":
        queries = [products.get(int(i)) for i in products.ids]
        queries = [ProbPoint(w.coords, w.prob) for w in queries]
    else:
        lo, hi = products.coords.min(axis=0), products.coords.max(axis=0)
        queries = [ProbPoint(lo + (hi - lo) * rng.random(products.dim), rng.uniform(1e-6, 1.0))
                   for _ in range(args.queries)]
    runners = {}
    failures = ties = 0
    ctx = _faulty_guard() if args.inject_fault else _null()
    with ctx:
        for n, q in enumerate(queries):
            pset, _ = _exclude_query_twin(q, products, [])
            key = tuple(sorted(int(i) for i in pset.ids))
            if key not in runners:
                runners.clear()
                runners[key] = {
                    mode: {k: Runner(pset, customers, mode, k, args.max_entries, args.policy)
                           for k in (args.threads if mode.startswith("parallel") else [1])}
                    for mode in INDEX_MODES
                }
            expect = urs_brute(q, pset, customers)
            tau = influence_brute(q, pset, customers)
            bad = []
            for mode, by_k in runners[key].items():
                for k, runner in by_k.items():
                    got = runner.urs(q)["urs"]
                    if got != expect:
                        bad.append(f"{mode}/k={k} urs={got}")
                    t = runner.influence(q)["tau"]
                    if abs(t - tau) > 1e-9:
                        bad.append(f"{mode}/k={k} tau={t!r}")
            tied = _has_ties(q, pset, customers)
            ties += tied
            label = "query " + ",".join(map(repr, q.coords)) + f";{q.prob!r}"
            if bad:
                failures += 1
                print(f"FAIL {n}: {label} expected urs={expect} tau={tau!r}; " + "; ".join(bad))
            else:
                print(f"pass {n}: {label} |urs|={len(expect)} tau={tau:.6f}" + (" (ties)" if tied else ""))
    print(f"summary: {len(queries) - failures}/{len(queries)} queries pass; "
          f"{ties} instance(s) with tied coordinates, all checked exactly")
    return 1 if failures else 0


@contextmanager
def _null():
    yield


def _has_ties(q, products, customers) -> bool:
    pts = np.vstack([products.coords, [q.coords], customers.coords])
    return any(len(np.unique(pts[:, i])) < len(pts) for i in range(pts.shape[1]))


BENCH_FIELDS = ["task", "mode", "n_products", "n_customers", "dims", "threads", "max_entries",
                "query", "total_ms", "index_ms", "umsl_ms", "urs_ms", "influence_ms",
                "result_size", "umsl_size", "nodes_visited", "nodes_pruned", "speedup_vs_naive"]


def cmd_bench(args) -> int:
    rows = []
    for n in args.n:
        for m in (args.m or [n]):
            for d in args.dims:
                p = generate(GenSpec(PRODUCTS, args.dist, n, d, args.seed))
                c = generate(GenSpec(CUSTOMERS, args.dist, m, d, args.seed + 1))
                qrng = np.random.default_rng(args.seed + 2)
                queries = [ProbPoint(qrng.random(d), qrng.uniform(1e-6, 1.0)) for _ in range(args.queries)]
                for mode in args.modes:
                    ks = args.threads if mode.startswith("parallel") else [1]
                    ms = args.max_entries if mode != "naive" or args.task == "influence" else [args.max_entries[0]]
                    for k in ks:
                        for fan in ms:
                            runner = Runner(p, c, mode, k, fan, args.policy)
                            fn = getattr(runner, args.task)
                            for qi, q in enumerate(queries):
                                out = _timed(fn, q, args.repeat)
                                t, cnt = out["timings_ms"], out["counters"]
                                rows.append({
                                    "task": args.task, "mode": mode, "n_products": n, "n_customers": m,
                                    "dims": d, "threads": k, "max_entries": fan, "query": qi,
                                    "total_ms": round(t["total"], 3), "index_ms": round(runner.index_ms, 3),
                                    "umsl_ms": round(t.get("umsl", 0.0), 3), "urs_ms": round(t.get("urs", 0.0), 3),
                                    "influence_ms": round(t.get("influence", 0.0), 3),
                                    "result_size": len(out["urs"]), "umsl_size": out["umsl_size"],
                                    "nodes_visited": cnt.get("pr_visited", 0) + cnt.get("cr_visited", 0),
                                    "nodes_pruned": cnt.get("pr_pruned", 0) + cnt.get("cr_pruned", 0),
                                    "speedup_vs_naive": "",
                                })
    naive = {(r["n_products"], r["n_customers"], r["dims"], r["query"]): r["total_ms"]
             for r in rows if r["mode"] == "naive"}
    for r in rows:
        base = naive.get((r["n_products"], r["n_customers"], r["dims"], r["query"]))
        if base is not None and r["mode"] != "naive" and r["total_ms"] > 0:
            r["speedup_vs_naive"] = round(base / r["total_ms"], 2)
    fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, BENCH_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    _flag_scaling(rows)
    return 0


def _flag_scaling(rows) -> None:
    """Warn (stderr) when more threads made the customer phase slower."""
    groups = {}
    for r in rows:
        if r["mode"].startswith("parallel"):
            key = (r["mode"], r["n_products"], r["n_customers"], r["dims"], r["max_entries"])
            groups.setdefault(key, {}).setdefault(r["threads"], []).append(r["urs_ms"])
    for key, by_k in groups.items():
        med = [statistics.median(by_k[k]) for k in sorted(by_k)]
        if any(b > a for a, b in zip(med, med[1:])):
            print(f"flag: phase-2 time not monotone in threads for {key} "
                  f"(host cores: {os.cpu_count()})", file=sys.stderr)


# -- parser ----------------------------------------------------------------------


def _add_data_args(p, need_query=True, thread_list=False):
    p.add_argument("--products", help="products CSV (id,x1..xd,prob)")
    p.add_argument("--customers", help="customers CSV (id,x1..xd)")
    p.add_argument("--fixture", choices=["wine"], help="use the built-in wine example instead of files")
    if need_query:
        p.add_argument("--query", type=parse_query, required=True, help='e.g. "40,70;0.90"')
        p.add_argument("--exclude", type=_int_list(-2**63, 2**63 - 1), default=[],
                       help="product ids to leave out (comma separated)")
        p.add_argument("--mode", choices=MODES, default="serial")
        p.add_argument("--repeat", type=_int_in(1, 10**6), default=3)
        p.add_argument("--out", help="write JSON here instead of stdout")
    if thread_list:
        p.add_argument("--threads", type=_int_list(1, 1024), default=[1, 2, 4, 8],
                       help="worker counts to check in the parallel modes")
    else:
        p.add_argument("--threads", type=_int_in(1, 1024), default=_default_threads())
    p.add_argument("--max-entries", type=_int_in(2, 1024), default=50)
    p.add_argument("--policy", choices=POLICIES, default=ROUND_ROBIN)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="urskyline", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--kind", choices=[PRODUCTS, CUSTOMERS], required=True)
    g.add_argument("--dist", type=str.upper, choices=DISTRIBUTIONS, default="UN")
    g.add_argument("--n", type=_int_in(1, 10**9), required=True)
    g.add_argument("--dims", type=_int_in(2, 16), default=2)
    g.add_argument("--seed", type=_int_in(0, 2**64 - 1), default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    for name, func in (("urs", cmd_urs), ("influence", cmd_influence)):
        p = sub.add_parser(name, help=f"answer one {name} query")
        _add_data_args(p)
        p.set_defaults(func=func)

    v = sub.add_parser("verify", help="check every mode against the exhaustive oracle")
    _add_data_args(v, need_query=False, thread_list=True)
    v.add_argument("--dist", type=str.upper, choices=DISTRIBUTIONS, default="UN")
    v.add_argument("--n", type=_int_in(1, 10**6), default=200, help="generated products")
    v.add_argument("--m", type=_int_in(1, 10**6), help="generated customers (default --n)")
    v.add_argument("--dims", type=_int_in(2, 16), default=2)
    v.add_argument("--queries", type=_int_in(1, 10**6), default=50)
    v.add_argument("--seed", type=_int_in(0, 2**63), default=0)
    v.add_argument("--inject-fault", action="store_true",
                   help="harness check: corrupt the index's probability guard")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="timing sweep, one CSV row per configuration and query")
    b.add_argument("--task", choices=["urs", "influence"], default="urs")
    b.add_argument("--modes", type=lambda s: [m for m in s.split(",") if m], default=["serial", "naive"])
    b.add_argument("--dist", type=str.upper, choices=DISTRIBUTIONS, default="UN")
    b.add_argument("--n", type=_int_list(1, 10**9), default=[2000], help="product cardinalities")
    b.add_argument("--m", type=_int_list(1, 10**9), help="customer cardinalities (default: same as --n)")
    b.add_argument("--dims", type=_int_list(2, 16), default=[2])
    b.add_argument("--threads", type=_int_list(1, 1024), default=[_default_threads()])
    b.add_argument("--max-entries", type=_int_list(2, 1024), default=[50])
    b.add_argument("--policy", choices=POLICIES, default=ROUND_ROBIN)
    b.add_argument("--queries", type=_int_in(1, 10**6), default=3)
    b.add_argument("--repeat", type=_int_in(1, 10**6), default=3)
    b.add_argument("--seed", type=_int_in(0, 2**63), default=0)
    b.add_argument("--out", help="CSV path (default stdout)")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench":
        unknown = [m for m in args.modes if m not in MODES]
        if unknown:
            parser.error(f"unknown mode(s) {unknown}; choose from {MODES}")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataFormatError, DimensionError, ValueError, OSError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
