"""Probability vectors on cylinder partitions and on finite point sets."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .shift import Cylinder, PeriodicOrbit, Point, Word, index_word, word_index

MASS_TOL = 1e-12
STATIONARY_TOL = 1e-9


@dataclass(frozen=True)
class FiniteMeasure:
    """Finitely many atoms; an atom is a :class:`Point` or a string label."""

    atoms: tuple
    tol: float = field(default=MASS_TOL, compare=False)

    def __post_init__(self):
        atoms = tuple((key, float(mass)) for key, mass in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        masses = np.array([m for _, m in atoms])
        if masses.size == 0:
            raise ValueError("a measure needs at least one atom")
        if (masses < -self.tol).any():
            raise ValueError("negative mass in FiniteMeasure")
        if abs(masses.sum() - 1.0) > self.tol:
            raise ValueError(f"masses sum to {masses.sum()!r}, not 1")

    @classmethod
    def dirac(cls, key) -> "FiniteMeasure":
        return cls(((key, 1.0),))

    @property
    def keys(self) -> list:
        return [k for k, _ in self.atoms]

    @property
    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.atoms])

    def __len__(self):
        return len(self.atoms)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["point", "mass"])
        for key, mass in self.atoms:
            w.writerow([str(key), repr(mass)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, d: int = 2) -> "FiniteMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        atoms = []
        for key, mass in rows[1:]:
            atoms.append((Point.parse(key, d) if "|" in key else key, float(mass)))
        return cls(tuple(atoms))


@dataclass(frozen=True)
class CylinderMeasure:
    """Masses of the d**depth cylinders, stored densely in index order."""

    depth: int
    masses: np.ndarray
    d: int = 2

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        if masses.shape != (self.d ** self.depth,):
            raise ValueError(f"expected {self.d ** self.depth} masses, got shape {masses.shape}")
        if (masses < -MASS_TOL).any():
            raise ValueError("negative mass in CylinderMeasure")
        if abs(masses.sum() - 1.0) > 1e-9:
            raise ValueError(f"masses sum to {masses.sum()!r}, not 1")
        masses = masses.copy()
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_dict(cls, mapping: dict, d: int = 2) -> "CylinderMeasure":
        words = [w if isinstance(w, Word) else Word.parse(str(w).strip("[]"), d) for w in mapping]
        depths = {len(w) for w in words}
        if len(depths) != 1:
            raise ValueError("all cylinders must share one depth")
        depth = depths.pop()
        masses = np.zeros(d ** depth)
        for w, mass in zip(words, mapping.values()):
            masses[w.index] += mass
        return cls(depth, masses, d)

    @classmethod
    def uniform(cls, depth: int, d: int = 2) -> "CylinderMeasure":
        return cls(depth, np.full(d ** depth, 1.0 / d ** depth), d)

    def mass(self, cyl) -> float:
        if isinstance(cyl, str):
            cyl = Cylinder.parse(cyl.strip("[]"), self.d)
        if cyl.depth > self.depth:
            raise ValueError("cylinder deeper than the measure")
        block = self.d ** (self.depth - cyl.depth)
        start = cyl.index * block
        return float(self.masses[start:start + block].sum())

    def items(self):
        for i, m in enumerate(self.masses):
            yield Cylinder.from_index(i, self.depth, self.d), float(m)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["word", "mass"])
        for cyl, mass in self.items():
            w.writerow([str(cyl.word), repr(mass)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, d: int = 2) -> "CylinderMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        return cls.from_dict({Word.parse(w, d): float(m) for w, m in rows[1:]}, d)


def orbit_measure(orbit: PeriodicOrbit) -> FiniteMeasure:
    pts = orbit.points()
    return FiniteMeasure(tuple((p, 1.0 / len(pts)) for p in pts))


def project_to_depth(m, k: int, d: int | None = None) -> CylinderMeasure:
    if k < 1:
        raise ValueError("depth must be >= 1")
    if isinstance(m, CylinderMeasure):
        if m.depth < k:
            raise ValueError(f"cannot project depth {m.depth} measure to deeper depth {k}")
        coarse = m.masses.reshape(m.d ** k, m.d ** (m.depth - k)).sum(axis=1)
        return CylinderMeasure(k, coarse, m.d)
    if d is None:
        ds = {key.d for key in m.keys if isinstance(key, Point)}
        d = ds.pop() if ds else 2
    masses = np.zeros(d ** k)
    for key, mass in m.atoms:
        if not isinstance(key, Point):
            raise ValueError(f"atom {key!r} is a label, it has no cylinder")
        masses[word_index(key.prefix(k), d)] += mass
    return CylinderMeasure(k, masses, d)


def flow_balance(masses: np.ndarray, depth: int, d: int) -> np.ndarray:
    """in-flow minus out-flow of every word of length depth-1."""
    n = d ** (depth - 1)
    inflow = masses.reshape(d, n).sum(axis=0)   # sum_a m[a.w]
    outflow = masses.reshape(n, d).sum(axis=1)  # sum_a m[w.a]
    return inflow - outflow


def stationarity_residual(m: CylinderMeasure) -> float:
    if m.depth < 2:
        raise ValueError("stationarity is only defined from depth 2")
    return float(np.abs(flow_balance(m.masses, m.depth, m.d)).max())


@dataclass(frozen=True)
class StationarityConstraints:
    """Flow-balance rows: one per word w of length depth-1."""

    depth: int
    d: int = 2

    @property
    def n_rows(self) -> int:
        return self.d ** (self.depth - 1)

    def matrix(self) -> np.ndarray:
        """Dense (d**(k-1), d**k) matrix M with (M m)[w] = sum_a m[a.w] - sum_a m[w.a]."""
        k, d = self.depth, self.d
        n = d ** (k - 1)
        cols = np.arange(d ** k)
        M = np.zeros((n, d ** k))
        np.add.at(M, (cols % n, cols), 1.0)
        np.add.at(M, (cols // d, cols), -1.0)
        return M


def transition_matrix(m: CylinderMeasure) -> np.ndarray:
    """(d**(k-1), d) conditional next-symbol probabilities; dead contexts get 0."""
    n = m.d ** (m.depth - 1)
    joint = m.masses.reshape(n, m.d)
    ctx = joint.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(ctx > 0, joint / np.where(ctx > 0, ctx, 1.0), 0.0)
    return P


def _require_stationary(m, tol):
    r = stationarity_residual(m)
    if r > tol:
        raise ValueError(f"measure is not stationary (residual {r:.3e} > {tol:.1e})")


def markov_extension_mass(m: CylinderMeasure, w, tol: float = STATIONARY_TOL) -> float:
    """Mass of [w] under the (k-1)-step Markov extension of a stationary m."""
    if isinstance(w, str):
        w = Word.parse(w, m.d)
    s = w.symbols
    k = m.depth
    if len(s) <= k:
        raise ValueError("word must be longer than the measure depth")
    _require_stationary(m, tol)
    P = transition_matrix(m)
    mass = float(m.masses[word_index(s[:k], m.d)])
    for j in range(1, len(s) - k + 1):
        ctx = word_index(s[j:j + k - 1], m.d)
        mass *= P[ctx, s[j + k - 1]]
    return mass


def markov_extend(m: CylinderMeasure, depth: int, tol: float = STATIONARY_TOL) -> CylinderMeasure:
    """Depth-``depth`` marginal of the Markov extension of m."""
    if depth < m.depth:
        raise ValueError("markov_extend only goes deeper")
    _require_stationary(m, tol)
    d, k = m.d, m.depth
    P = transition_matrix(m)
    n_ctx = d ** (k - 1)
    cur = np.asarray(m.masses)
    for _ in range(depth - k):
        idx = np.arange(cur.size)
        cur = (cur[:, None] * P[idx % n_ctx]).reshape(-1)
    total = cur.sum()
    return CylinderMeasure(depth, cur / total if total > 0 else cur, d)


__all__ = [
    "FiniteMeasure", "CylinderMeasure", "StationarityConstraints", "orbit_measure",
    "project_to_depth", "stationarity_residual", "flow_balance", "markov_extension_mass",
    "markov_extend", "transition_matrix", "index_word",
]
