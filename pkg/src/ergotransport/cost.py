"""Cost functions c(x, y) with exact point values and sound cylinder brackets.

Every cost knows three things: its value at a pair of points, an enclosure
[lo, hi] over a pair of cells, and a Lipschitz constant for the metric
lam**(first disagreement).  Brackets are analytic, never sampled.

The x side of a problem is described by :class:`XCells`: either the depth-k
cylinders of a shift space, or a finite list of atoms (string labels or
:class:`~ergotransport.shift.Point` objects).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .shift import (DEFAULT_LAMBDA, Cylinder, Point, common_prefix_lengths, digit_table,
                    metric_distance, word_index)


@dataclass(frozen=True)
class XCells:
    keys: tuple = ()
    depth: int = 0
    d: int = 2

    @classmethod
    def atoms(cls, keys, d: int = 2) -> "XCells":
        return cls(tuple(keys), 0, d)

    @classmethod
    def cylinders(cls, depth: int, d: int = 2) -> "XCells":
        if depth < 1:
            raise ValueError("cylinder x-cells need depth >= 1")
        return cls((), depth, d)

    @property
    def is_cylinders(self) -> bool:
        return self.depth > 0

    def __len__(self):
        return self.d ** self.depth if self.is_cylinders else len(self.keys)

    def cell(self, i):
        if self.is_cylinders:
            return Cylinder.from_index(i, self.depth, self.d)
        return self.keys[i]

    def index_of(self, cell) -> int:
        if self.is_cylinders:
            if not isinstance(cell, Cylinder) or cell.depth != self.depth:
                raise ValueError(f"{cell} is not a depth-{self.depth} cylinder")
            return cell.index
        return self.keys.index(cell)


@dataclass(frozen=True)
class CostBracket:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty bracket [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


def _dist_cells(words: np.ndarray, anchor: Point, lam: float):
    """Exact [inf, sup] of d(y, anchor) over each cylinder in ``words``."""
    k = words.shape[1]
    m = common_prefix_lengths(words, np.array(anchor.prefix(k)))
    inside = m == k
    lo = np.where(inside, 0.0, lam ** m.astype(float))
    hi = np.where(inside, lam ** k, lo)
    return lo, hi


def _dist_x(xcells: XCells, anchor: Point, lam: float):
    if xcells.is_cylinders:
        return _dist_cells(digit_table(xcells.depth, xcells.d), anchor, lam)
    vals = []
    for key in xcells.keys:
        if not isinstance(key, Point):
            raise ValueError(f"x-atom {key!r} is a bare label; this cost needs points")
        vals.append(metric_distance(key, anchor, lam))
    vals = np.array(vals, dtype=float)
    return vals, vals.copy()


class CostSpec:
    """Base class; subclasses implement the three primitives."""

    kind = "abstract"

    def eval_point(self, x, y: Point, lam: float = DEFAULT_LAMBDA) -> float:
        raise NotImplementedError

    def bracket_grid(self, xcells: XCells, ky: int, lam: float = DEFAULT_LAMBDA):
        """(lo, hi), each of shape (len(xcells), d**ky)."""
        raise NotImplementedError

    def lipschitz(self, lam: float = DEFAULT_LAMBDA) -> float:
        raise NotImplementedError

    def min_depth(self):
        """Smallest (kx, ky) resolution at which brackets are defined."""
        return 0, 1

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __neg__(self):
        return Affine(self, -1.0, 0.0)


@dataclass(frozen=True, eq=False)
class TableCost(CostSpec):
    """Locally constant cost: ``values[row, j]`` with j the depth-``ky`` y-prefix.

    The row is picked by x-label (``x_labels``), by the depth-``kx`` x-prefix,
    or is the single row when ``kx == 0`` and no labels are given.
    """

    values: np.ndarray
    ky: int
    kx: int = 0
    x_labels: tuple | None = None
    d: int = 2
    kind = "table"

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[None, :]
        if not np.isfinite(vals).all():
            raise ValueError("table values must be finite")
        n_rows = len(self.x_labels) if self.x_labels is not None else self.d ** self.kx
        if vals.shape != (n_rows, self.d ** self.ky):
            raise ValueError(f"table shape {vals.shape} != ({n_rows}, {self.d ** self.ky})")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.x_labels is not None:
            object.__setattr__(self, "x_labels", tuple(self.x_labels))

    def _row(self, x) -> int:
        if self.x_labels is not None:
            if x not in self.x_labels:
                raise ValueError(f"unknown x-label {x!r}")
            return self.x_labels.index(x)
        if self.kx == 0:
            return 0
        if isinstance(x, Point):
            return word_index(x.prefix(self.kx), self.d)
        if isinstance(x, Cylinder) and x.depth >= self.kx:
            return word_index(x.word.symbols[:self.kx], self.d)
        raise ValueError(f"cannot locate {x!r} in a depth-{self.kx} table")

    def eval_point(self, x, y, lam=DEFAULT_LAMBDA):
        return float(self.values[self._row(x), word_index(y.prefix(self.ky), self.d)])

    def bracket_grid(self, xcells, ky, lam=DEFAULT_LAMBDA):
        if ky < self.ky:
            raise ValueError(f"table needs y-depth >= {self.ky}")
        cols = np.arange(self.d ** ky) // self.d ** (ky - self.ky)
        if xcells.is_cylinders and self.x_labels is None:
            if xcells.depth < self.kx:
                raise ValueError(f"table needs x-depth >= {self.kx}")
            rows = np.arange(len(xcells)) // self.d ** (xcells.depth - self.kx) if self.kx else np.zeros(len(xcells), int)
        else:
            rows = np.array([self._row(key) for key in xcells.keys], dtype=int)
        grid = self.values[rows][:, cols]
        return grid, grid.copy()

    def lipschitz(self, lam=DEFAULT_LAMBDA):
        osc = float(self.values.max() - self.values.min())
        return osc / lam ** max(self.kx, self.ky)

    def min_depth(self):
        return self.kx, self.ky

    def to_dict(self):
        out = {"type": "table", "kx": self.kx, "ky": self.ky, "values": self.values.tolist()}
        if self.x_labels is not None:
            out["x_labels"] = list(self.x_labels)
        return out


def constant_cost(value: float, d: int = 2) -> TableCost:
    return TableCost(np.full((1, d), float(value)), ky=1, d=d)


@dataclass(frozen=True, eq=False)
class SqDistToPoints(CostSpec):
    """Finite X = labels; c(x_i, y) = d(y, anchor_i)**2."""

    anchors: dict
    kind = "sq_dist_to_points"

    def __post_init__(self):
        if not self.anchors:
            raise ValueError("need at least one anchor")

    def _anchor(self, x):
        for key in (x, str(x)):
            try:
                return self.anchors[key]
            except (KeyError, TypeError):
                pass
        raise ValueError(f"unknown x-label {x!r}")

    def eval_point(self, x, y, lam=DEFAULT_LAMBDA):
        return metric_distance(y, self._anchor(x), lam) ** 2

    def bracket_grid(self, xcells, ky, lam=DEFAULT_LAMBDA):
        if xcells.is_cylinders:
            raise ValueError("sq_dist_to_points needs labelled x-atoms")
        words = digit_table(ky, self._d())
        lo = np.empty((len(xcells), words.shape[0]))
        hi = np.empty_like(lo)
        for i, key in enumerate(xcells.keys):
            dlo, dhi = _dist_cells(words, self._anchor(key), lam)
            lo[i], hi[i] = dlo ** 2, dhi ** 2
        return lo, hi

    def _d(self):
        return next(iter(self.anchors.values())).d

    def lipschitz(self, lam=DEFAULT_LAMBDA):
        # |d(y,a)^2 - d(z,a)^2| <= (d(y,a) + d(z,a)) d(y,z) <= 2 d(y,z), diameter 1
        return 2.0

    def to_dict(self):
        return {"type": "sq_dist_to_points", "anchors": {k: str(v) for k, v in self.anchors.items()}}


@dataclass(frozen=True, eq=False)
class MinSumSq(CostSpec):
    """c(x, y) = min over contacts (a, b) of d(x, a)**2 + d(y, b)**2."""

    contacts: tuple
    kind = "min_sum_sq"

    def __post_init__(self):
        object.__setattr__(self, "contacts", tuple((a, b) for a, b in self.contacts))
        if not self.contacts:
            raise ValueError("contact set must be nonempty")

    def eval_point(self, x, y, lam=DEFAULT_LAMBDA):
        if not isinstance(x, Point):
            raise ValueError(f"min_sum_sq needs x to be a point, got {x!r}")
        return min(metric_distance(x, a, lam) ** 2 + metric_distance(y, b, lam) ** 2
                   for a, b in self.contacts)

    def bracket_grid(self, xcells, ky, lam=DEFAULT_LAMBDA):
        words = digit_table(ky, self.contacts[0][1].d)
        lo = hi = None
        for a, b in self.contacts:
            xl, xh = _dist_x(xcells, a, lam)
            yl, yh = _dist_cells(words, b, lam)
            zl = xl[:, None] ** 2 + yl[None, :] ** 2
            zh = xh[:, None] ** 2 + yh[None, :] ** 2
            # inf of a min is the min of infs; sup of a min is at most the min of sups
            lo = zl if lo is None else np.minimum(lo, zl)
            hi = zh if hi is None else np.minimum(hi, zh)
        return lo, hi

    def lipschitz(self, lam=DEFAULT_LAMBDA):
        return 2.0

    def to_dict(self):
        return {"type": "min_sum_sq", "contacts": [[str(a), str(b)] for a, b in self.contacts]}


@dataclass(frozen=True, eq=False)
class PairSqDist(CostSpec):
    """c(x, y) = d(x, y)**2 on X = Y."""

    d: int = 2
    kind = "pair_sq_dist"

    def eval_point(self, x, y, lam=DEFAULT_LAMBDA):
        if not isinstance(x, Point):
            raise ValueError(f"pair_sq_dist needs x to be a point, got {x!r}")
        return metric_distance(x, y, lam) ** 2

    def bracket_grid(self, xcells, ky, lam=DEFAULT_LAMBDA):
        ywords = digit_table(ky, self.d)
        if not xcells.is_cylinders:
            lo = np.empty((len(xcells), ywords.shape[0]))
            hi = np.empty_like(lo)
            for i, key in enumerate(xcells.keys):
                if not isinstance(key, Point):
                    raise ValueError(f"x-atom {key!r} is a bare label; this cost needs points")
                dl, dh = _dist_cells(ywords, key, lam)
                lo[i], hi[i] = dl ** 2, dh ** 2
            return lo, hi
        xwords = digit_table(xcells.depth, self.d)
        K = min(xcells.depth, ky)
        eq = xwords[:, None, :K] == ywords[None, :, :K]
        m = np.where(eq.all(axis=2), K, (~eq).argmax(axis=2))
        exact = lam ** m.astype(float)
        lo = np.where(m == K, 0.0, exact) ** 2
        hi = np.where(m == K, lam ** K, exact) ** 2
        return lo, hi

    def lipschitz(self, lam=DEFAULT_LAMBDA):
        return 2.0

    def to_dict(self):
        return {"type": "pair_sq_dist"}


@dataclass(frozen=True, eq=False)
class Affine(CostSpec):
    """scale * inner + shift."""

    inner: CostSpec
    scale: float
    shift: float = 0.0
    kind = "affine"

    def __post_init__(self):
        if self.scale == 0:
            raise ValueError("affine scale must be nonzero")

    def eval_point(self, x, y, lam=DEFAULT_LAMBDA):
        return self.scale * self.inner.eval_point(x, y, lam) + self.shift

    def bracket_grid(self, xcells, ky, lam=DEFAULT_LAMBDA):
        lo, hi = self.inner.bracket_grid(xcells, ky, lam)
        a, b = self.scale * lo + self.shift, self.scale * hi + self.shift
        return (a, b) if self.scale > 0 else (b, a)

    def lipschitz(self, lam=DEFAULT_LAMBDA):
        return abs(self.scale) * self.inner.lipschitz(lam)

    def min_depth(self):
        return self.inner.min_depth()

    def to_dict(self):
        return {"type": "affine", "scale": self.scale, "shift": self.shift,
                "inner": self.inner.to_dict()}


def eval_point(c: CostSpec, x, y: Point, lam: float = DEFAULT_LAMBDA) -> float:
    return c.eval_point(x, y, lam)


def lipschitz_bound(c: CostSpec, lam: float = DEFAULT_LAMBDA) -> float:
    return c.lipschitz(lam)


def cost_bracket(c: CostSpec, u, v: Cylinder, lam: float = DEFAULT_LAMBDA) -> CostBracket:
    """Enclosure of c over u x v; u is an x-label, a Point or a Cylinder."""
    if isinstance(u, Cylinder):
        xcells = XCells.cylinders(u.depth, u.d)
        row = u.index
    else:
        xcells = XCells.atoms((u,), v.d)
        row = 0
    lo, hi = c.bracket_grid(xcells, v.depth, lam)
    return CostBracket(float(lo[row, v.index]), float(hi[row, v.index]))


def cost_from_dict(rec: dict, d: int = 2) -> CostSpec:
    """Build a CostSpec from its tagged-record form (see README for the grammar)."""
    kind = rec.get("type")
    if kind == "table":
        labels = rec.get("x_labels")
        return TableCost(np.array(rec["values"], dtype=float), ky=int(rec["ky"]),
                         kx=int(rec.get("kx", 0)),
                         x_labels=tuple(labels) if labels is not None else None, d=d)
    if kind == "sq_dist_to_points":
        anchors = rec["anchors"]
        pairs = anchors.items() if isinstance(anchors, dict) else anchors
        return SqDistToPoints({str(k): Point.parse(v, d) for k, v in pairs})
    if kind == "min_sum_sq":
        return MinSumSq(tuple((Point.parse(a, d), Point.parse(b, d)) for a, b in rec["contacts"]))
    if kind == "pair_sq_dist":
        return PairSqDist(d)
    if kind == "constant":
        return constant_cost(float(rec["value"]), d)
    if kind == "affine":
        return Affine(cost_from_dict(rec["inner"], d), float(rec["scale"]), float(rec.get("shift", 0.0)))
    raise ValueError(f"unknown cost type {kind!r}")
