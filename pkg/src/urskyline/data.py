"""Synthetic datasets, normalisation, CSV persistence and the wine fixture.

CSV formats (UTF-8, ``\\n`` line endings, header row):

* products: ``id,x1,...,xd,prob``
* customers: ``id,x1,...,xd``

Numbers are written as the shortest positional decimal that reads back to
the same double, so a save/load round trip is exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CustomerSet, ProductSet

PRODUCTS = "products"
CUSTOMERS = "customers"
DISTRIBUTIONS = ("UN", "CO", "AC")
PROB_EPS = 1e-6
JITTER = 0.05


class DataFormatError(ValueError):
    """A dataset file that cannot be parsed; the message names the line."""


@dataclass(frozen=True)
class GenSpec:
    kind: str
    dist: str
    n: int
    d: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dist", self.dist.upper())
        if self.kind not in (PRODUCTS, CUSTOMERS):
            raise ValueError(f"kind must be {PRODUCTS!r} or {CUSTOMERS!r}, got {self.kind!r}")
        if self.dist not in DISTRIBUTIONS:
            raise ValueError(f"dist must be one of {DISTRIBUTIONS}, got {self.dist!r}")
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")
        if not 2 <= self.d <= 16:
            raise ValueError(f"d must lie in [2, 16], got {self.d}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _points(dist: str, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if dist == "UN":
        return rng.random((n, d))
    if dist == "CO":
        base = rng.random((n, 1))
        pts = base + rng.normal(0.0, JITTER, (n, d))
    else:
        # spread uniformly within the plane sum(x) = d * v, v close to 1/2
        y = rng.random((n, d))
        v = rng.normal(0.5, JITTER, (n, 1))
        pts = y - y.mean(axis=1, keepdims=True) + v + rng.normal(0.0, JITTER / 2, (n, d))
    return np.clip(pts, 0.0, 1.0)


def generate(spec: GenSpec) -> ProductSet | CustomerSet:
    """Points in [0, 1]^d with ids 0..n-1; products also get probabilities
    drawn uniformly from (eps, 1 - eps).  Deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    pts = _points(spec.dist, spec.n, spec.d, rng)
    ids = np.arange(spec.n)
    if spec.kind == CUSTOMERS:
        return CustomerSet(ids, pts)
    return ProductSet(ids, pts, rng.uniform(PROB_EPS, 1.0 - PROB_EPS, spec.n))


def normalize(data: ProductSet | CustomerSet) -> ProductSet | CustomerSet:
    """Per-dimension min-max scaling to [0, 1]; constant dimensions become 0."""
    x = data.coords
    if not len(x):
        raise ValueError("cannot normalise an empty dataset")
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = hi - lo
    out = np.divide(x - lo, span, out=np.zeros_like(x), where=span > 0)
    if isinstance(data, ProductSet):
        return ProductSet(data.ids, out, data.probs)
    return CustomerSet(data.ids, out)


# -- CSV ----------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return np.format_float_positional(float(x), unique=True, trim="-")


def save_csv(data: ProductSet | CustomerSet, path: str | Path) -> None:
    d = data.coords.shape[1]
    header = ["id"] + [f"x{i + 1}" for i in range(d)]
    is_products = isinstance(data, ProductSet)
    if is_products:
        header.append("prob")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(data)):
            row = [str(int(data.ids[k]))] + [_fmt(v) for v in data.coords[k]]
            if is_products:
                row.append(_fmt(data.probs[k]))
            w.writerow(row)


def load_csv(path: str | Path, kind: str) -> ProductSet | CustomerSet:
    if kind not in (PRODUCTS, CUSTOMERS):
        raise ValueError(f"kind must be {PRODUCTS!r} or {CUSTOMERS!r}, got {kind!r}")
    extra = 1 if kind == PRODUCTS else 0
    ids, coords, probs = [], [], []
    seen: dict[int, int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        width = len(header)
        if width < 2 + extra or header[0].strip() != "id":
            raise DataFormatError(f"{path}:1: bad header {header!r} for {kind}")
        if extra and header[-1].strip() != "prob":
            raise DataFormatError(f"{path}:1: product files need a trailing 'prob' column")
        for row in reader:
            line = reader.line_num
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != width:
                raise DataFormatError(f"{path}:{line}: expected {width} columns, got {len(row)}")
            try:
                pid = int(row[0])
                vals = [float(f) for f in row[1:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{line}: {exc}") from None
            if not np.isfinite(vals).all():
                raise DataFormatError(f"{path}:{line}: non-finite value")
            if pid in seen:
                raise DataFormatError(f"{path}:{line}: duplicate id {pid} (first on line {seen[pid]})")
            seen[pid] = line
            if extra:
                pr = vals.pop()
                if not 0.0 < pr <= 1.0:
                    raise DataFormatError(f"{path}:{line}: probability {pr} outside (0, 1]")
                probs.append(pr)
            ids.append(pid)
            coords.append(vals)
    if not ids:
        raise DataFormatError(f"{path}: no data rows")
    if kind == PRODUCTS:
        return ProductSet(ids, np.array(coords), probs)
    return CustomerSet(ids, np.array(coords))


# -- worked example ------------------------------------------------------------------


def wine_fixture() -> tuple[ProductSet, CustomerSet]:
    """Six wines (price, sweetness; rating as probability) and three customers.

    Wine ``w_i`` has id ``i`` and customer ``c_j`` has id ``j``.  The source
    table repeats c1..c3 verbatim as c4..c6; the copies are left out.
    """
    wines = ProductSet.from_records([
        (1, (40, 70), 0.90),
        (2, (20, 90), 0.80),
        (3, (60, 170), 0.40),
        (4, (30, 220), 0.50),
        (5, (90, 190), 0.70),
        (6, (70, 80), 0.60),
    ])
    customers = CustomerSet.from_records([
        (1, (55, 130)),
        (2, (35, 110)),
        (3, (70, 140)),
    ])
    return wines, customers
