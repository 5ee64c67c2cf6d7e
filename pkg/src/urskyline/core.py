"""Points, probabilistic products, datasets and the elementary predicates.

Datasets are stored column-wise in numpy arrays so the query code can work
on whole leaves at once; the scalar predicates below are the reference
definitions the vectorised paths are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

QUERY_ID = -1


class DimensionError(ValueError):
    pass


def _as_coords(values: Iterable[float]) -> tuple[float, ...]:
    coords = tuple(float(v) for v in values)
    if not coords:
        raise ValueError("a point needs at least one coordinate")
    if not all(np.isfinite(coords)):
        raise ValueError(f"non-finite coordinate in {coords}")
    return coords


def _check_dims(*points: Sequence[float]) -> int:
    d = len(points[0])
    for p in points[1:]:
        if len(p) != d:
            raise DimensionError(f"dimension mismatch: {d} vs {len(p)}")
    return d


@dataclass(frozen=True)
class ProbPoint:
    """A product: coordinates plus its occurrence probability."""

    coords: tuple[float, ...]
    prob: float
    id: int = QUERY_ID

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_coords(self.coords))
        prob = float(self.prob)
        if not 0.0 < prob <= 1.0:
            raise ValueError(f"probability must lie in (0, 1], got {prob}")
        object.__setattr__(self, "prob", prob)

    @property
    def dim(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class Midpoint:
    coords: tuple[float, ...]
    source_id: int
    source_prob: float


@dataclass(frozen=True, eq=False)
class ProductSet:
    """Products as parallel arrays: ``ids`` (n,), ``coords`` (n, d), ``probs`` (n,)."""

    ids: np.ndarray
    coords: np.ndarray
    probs: np.ndarray
    _pos: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        coords = np.asarray(self.coords, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if coords.ndim != 2:
            coords = coords.reshape(len(ids), -1) if len(ids) else coords.reshape(0, 0)
        _validate_records(ids, coords)
        if len(probs) != len(ids):
            raise ValueError("probs and ids differ in length")
        if len(probs) and not ((probs > 0) & (probs <= 1)).all():
            raise ValueError("product probabilities must lie in (0, 1]")
        for name, arr in (("ids", ids), ("coords", coords), ("probs", probs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_pos", {int(i): k for k, i in enumerate(ids)})

    @classmethod
    def from_records(cls, records: Iterable[tuple[int, Sequence[float], float]]) -> "ProductSet":
        records = list(records)
        if not records:
            raise ValueError("empty product set")
        ids = [r[0] for r in records]
        coords = [_as_coords(r[1]) for r in records]
        _check_dims(*coords)
        return cls(ids, np.array(coords), [r[2] for r in records])

    @classmethod
    def empty(cls, d: int) -> "ProductSet":
        return cls(np.empty(0, np.int64), np.empty((0, d)), np.empty(0))

    @classmethod
    def from_points(cls, points: Sequence[ProbPoint]) -> "ProductSet":
        return cls.from_records((p.id, p.coords, p.prob) for p in points)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def index_of(self, pid: int) -> int:
        try:
            return self._pos[int(pid)]
        except KeyError:
            raise KeyError(f"product {pid} not in set") from None

    def __contains__(self, pid) -> bool:
        return int(pid) in self._pos

    def get(self, pid: int) -> ProbPoint:
        k = self.index_of(pid)
        return ProbPoint(self.coords[k], self.probs[k], int(self.ids[k]))

    def take(self, rows) -> "ProductSet":
        rows = np.asarray(rows, dtype=np.int64)
        return ProductSet(self.ids[rows], self.coords[rows], self.probs[rows])

    def without(self, pid: int) -> "ProductSet":
        keep = self.ids != pid
        return ProductSet(self.ids[keep], self.coords[keep], self.probs[keep])

    def with_query(self, q: ProbPoint) -> "ProductSet":
        """Return P ∪ {q}; q keeps its own id and never merges with a product."""
        if q.id in self:
            raise ValueError(f"query id {q.id} collides with a product id")
        if len(self) and q.dim != self.dim:
            raise DimensionError(f"query has d={q.dim}, products d={self.dim}")
        return ProductSet(
            np.append(self.ids, q.id),
            np.vstack([self.coords.reshape(-1, q.dim), [q.coords]]),
            np.append(self.probs, q.prob),
        )


@dataclass(frozen=True, eq=False)
class CustomerSet:
    ids: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2:
            coords = coords.reshape(len(ids), -1)
        _validate_records(ids, coords)
        for name, arr in (("ids", ids), ("coords", coords)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_records(cls, records: Iterable[tuple[int, Sequence[float]]]) -> "CustomerSet":
        records = list(records)
        if not records:
            raise ValueError("empty customer set")
        coords = [_as_coords(r[1]) for r in records]
        _check_dims(*coords)
        return cls([r[0] for r in records], np.array(coords))

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def take(self, rows) -> "CustomerSet":
        rows = np.asarray(rows, dtype=np.int64)
        return CustomerSet(self.ids[rows], self.coords[rows])


def _validate_records(ids: np.ndarray, coords: np.ndarray) -> None:
    if coords.shape[0] != len(ids):
        raise ValueError("ids and coords differ in length")
    if coords.shape[0] and coords.shape[1] < 1:
        raise ValueError("points need at least one dimension")
    if not np.isfinite(coords).all():
        raise ValueError("non-finite coordinate in dataset")
    if len(np.unique(ids)) != len(ids):
        raise ValueError("duplicate ids in dataset")


# -- scalar predicates ------------------------------------------------------


def orthant_of(q: Sequence[float], p: Sequence[float]) -> str:
    """Bit string with bit i = '0' iff ``p[i] <= q[i]``."""
    _check_dims(q, p)
    return "".join("0" if pi <= qi else "1" for pi, qi in zip(p, q))


def midpoint_of(p: ProbPoint, q: Sequence[float]) -> Midpoint:
    _check_dims(p.coords, q)
    return Midpoint(
        tuple((a + b) / 2.0 for a, b in zip(p.coords, q)), p.id, p.prob
    )


def dominates_wrt(ref: Sequence[float], a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff ``a`` is at least as close to ``ref`` as ``b`` in every
    dimension and strictly closer in one."""
    _check_dims(ref, a, b)
    strict = False
    for r, x, y in zip(ref, a, b):
        da, db = abs(x - r), abs(y - r)
        if da > db:
            return False
        if da < db:
            strict = True
    return strict


# -- vectorised helpers -----------------------------------------------------


def orthant_codes(q: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Integer orthant codes; bit i (value ``1 << i``) set iff ``pts[:, i] > q[i]``."""
    above = np.asarray(pts) > np.asarray(q)
    weights = 1 << np.arange(above.shape[-1], dtype=np.int64)
    return above.astype(np.int64) @ weights


def code_to_bits(code: int, d: int) -> str:
    return "".join("1" if code >> i & 1 else "0" for i in range(d))


def dominance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``out[i, j]`` is True iff distance vector ``a[i]`` dominates ``b[j]``.

    Inputs are already-transformed distance vectors (``|x - ref|``).
    """
    # looping over the (few) dimensions beats reducing a 3-D comparison
    le = np.ones((len(a), len(b)), dtype=bool)
    lt = np.zeros((len(a), len(b)), dtype=bool)
    for k in range(a.shape[1]):
        x, y = a[:, k, None], b[None, :, k]
        le &= x <= y
        lt |= x < y
    return le & lt


def prob_guard(pr_dominated, pr_dominator):
    """Sufficient condition for the dominator's dynamic skyline probability
    to exceed the dominated product's; vectorises over numpy inputs."""
    return (pr_dominated < pr_dominator) | (
        pr_dominated * (1.0 - pr_dominator) < pr_dominator
    )
