"""Zeta measures: Gibbs averages of maximising plans between periodic orbits.

For an orbit length ``n`` and inverse temperature ``beta`` every orbit
measure nu of Fix_n gets the log-weight ``beta * n * int c dpi(mu, nu)``,
where pi(mu, nu) is a maximising classical plan.  The zeta measure is the
weighted average of those plans.  Its y-marginal is a convex combination of
orbit measures, so it is shift-invariant exactly, whatever beta and n are.

Weights are formed in log space with one max-shift and summed with
``math.fsum`` in canonical orbit order, which makes results independent of
enumeration order and safe for ``beta * n`` up to about 1e6.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cost import Affine, CostSpec, XCells
from .errors import PositivityError
from .lp import classical_ot
from .measures import CylinderMeasure, FiniteMeasure, flow_balance, orbit_measure
from .shift import DEFAULT_FIX_CAP, DEFAULT_LAMBDA, Cylinder, enumerate_fix
from .transport import P1Instance, P2Instance, solve_p1, solve_p2

PERIOD_MODES = ("dividing", "exact")
TABLE_COLUMNS = ("beta", "n", "value", "res_x", "res_y", "gap")


@dataclass(frozen=True)
class ZetaParams:
    beta: float
    n: int
    period_mode: str = "dividing"
    cap: int = DEFAULT_FIX_CAP

    def __post_init__(self):
        if not self.beta >= 0 or not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if self.period_mode not in PERIOD_MODES:
            raise ValueError(f"period_mode must be one of {PERIOD_MODES}, got {self.period_mode!r}")


@dataclass(frozen=True)
class OrbitRow:
    """One term of the Gibbs sum: the orbit(s), the plan value, the plan projected to cells."""

    orbits: tuple
    integral: float
    cells: tuple  # ((x cell, y cell), mass) sorted


@dataclass
class ZetaResult:
    measure: list          # [(x cell, y cylinder, mass)], sorted
    value: float
    table: list            # [(orbit labels, integral, log-weight)]
    weights: np.ndarray
    report_depth: int
    mode: str
    d: int = 2
    mu: FiniteMeasure | None = field(default=None, repr=False)

    def x_marginal(self):
        """dict over mu's atoms for P1, CylinderMeasure for P2."""
        if self.mode == "p1":
            out = {}
            for u, _, m in self.measure:
                out.setdefault(u, []).append(m)
            return {u: math.fsum(ms) for u, ms in out.items()}
        return self._cyl_marginal(0)

    def y_marginal(self) -> CylinderMeasure:
        return self._cyl_marginal(1)

    def _cyl_marginal(self, side):
        masses = np.zeros(self.d ** self.report_depth)
        for atom in self.measure:
            masses[atom[side].index] += atom[2]
        return CylinderMeasure(self.report_depth, masses, self.d)

    def residuals(self) -> tuple:
        """(res_x, res_y): x-marginal error (P1) or flow-balance residual (P2), y flow balance."""
        y = self.y_marginal()
        res_y = _flow_residual(y)
        if self.mode == "p1":
            xm = self.x_marginal()
            res_x = max(abs(xm.get(k, 0.0) - m) for k, m in self.mu.atoms)
        else:
            res_x = _flow_residual(self.x_marginal())
        return float(res_x), float(res_y)


def _flow_residual(m: CylinderMeasure) -> float:
    if m.depth < 2:
        return 0.0
    return float(np.abs(flow_balance(m.masses, m.depth, m.d)).max())


def _sort_key(cell):
    return (0, cell.index) if isinstance(cell, Cylinder) else (1, str(cell))


def _check_positive(c: CostSpec, xcells: XCells, ky: int, lam: float):
    lo, _ = c.bracket_grid(xcells, ky, lam)
    bad = np.argwhere(lo <= 0)
    if bad.size:
        i, j = (int(t) for t in bad[0])
        u, v = xcells.cell(i), Cylinder.from_index(j, ky, xcells.d)
        raise PositivityError(
            f"zeta needs c > 0; cost lower bound is {float(lo[i, j])!r} on cell ({u}, {v})", (u, v))


def _plan_row(orbits, xs, ys, C, xcell, report_depth, a, b):
    plan = classical_ot(a, b, C, maximize=True)
    n = len(ys)
    acc = {}
    for k in np.flatnonzero(plan.lp.x > 0):
        key = (xcell(xs[k // n]), ys[k % n].cylinder(report_depth))
        acc.setdefault(key, []).append(float(plan.lp.x[k]))
    cells = tuple(sorted(((key, math.fsum(ms)) for key, ms in acc.items()),
                         key=lambda t: (_sort_key(t[0][0]), t[0][1].index)))
    return OrbitRow(orbits, plan.value, cells)


def _map(fn, items, workers):
    if workers is None or workers <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _orbits(params: ZetaParams, d: int):
    return sorted(enumerate_fix(params.n, d, exact=params.period_mode == "exact", cap=params.cap))


def orbit_table_p1(mu: FiniteMeasure, c: CostSpec, params: ZetaParams, report_depth: int,
                   lam: float = DEFAULT_LAMBDA, d: int = 2, workers: int | None = None) -> list:
    """Per-orbit maximising plans for mu -> orbit measures; independent of beta."""
    _check_positive(c, XCells.atoms(mu.keys, d), report_depth, lam)
    xs = mu.keys

    def one(orbit):
        ys = orbit_measure(orbit).keys
        C = np.array([[c.eval_point(x, y, lam) for y in ys] for x in xs])
        return _plan_row((str(orbit.primitive_word),), xs, ys, C, lambda x: x, report_depth,
                         mu.masses, np.full(len(ys), 1.0 / len(ys)))

    return _map(one, _orbits(params, d), workers)


def orbit_table_p2(c: CostSpec, params: ZetaParams, report_depth: int,
                   lam: float = DEFAULT_LAMBDA, d: int = 2, workers: int | None = None) -> list:
    """Per-pair maximising plans over ordered pairs of orbit measures."""
    _check_positive(c, XCells.cylinders(report_depth, d), report_depth, lam)
    orbits = _orbits(params, d)
    pairs = [(o1, o2) for o1 in orbits for o2 in orbits]

    def one(pair):
        o1, o2 = pair
        xs, ys = o1.points(), o2.points()
        C = np.array([[c.eval_point(x, y, lam) for y in ys] for x in xs])
        return _plan_row((str(o1.primitive_word), str(o2.primitive_word)), xs, ys, C,
                         lambda x: x.cylinder(report_depth), report_depth,
                         np.full(len(xs), 1.0 / len(xs)), np.full(len(ys), 1.0 / len(ys)))

    return _map(one, pairs, workers)


def gibbs_weights(log_weights) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    e = np.exp(lw - lw.max())
    return e / math.fsum(e)


def combine(rows: list, beta: float, n: int, report_depth: int, mode: str, d: int = 2,
            mu: FiniteMeasure | None = None) -> ZetaResult:
    """Gibbs-weighted average of per-orbit rows (canonical order, compensated sums)."""
    rows = sorted(rows, key=lambda r: r.orbits)
    logw = [beta * n * r.integral for r in rows]
    w = gibbs_weights(logw)
    value = math.fsum(wi * r.integral for wi, r in zip(w, rows))
    acc = {}
    for wi, r in zip(w, rows):
        for key, m in r.cells:
            acc.setdefault(key, []).append(wi * m)
    measure = [(u, v, math.fsum(ms)) for (u, v), ms in acc.items()]
    measure.sort(key=lambda t: (_sort_key(t[0]), t[1].index))
    table = [(r.orbits, r.integral, lw) for r, lw in zip(rows, logw)]
    return ZetaResult(measure, value, table, w, report_depth, mode, d, mu)


def zeta_p1(mu: FiniteMeasure, c: CostSpec, params: ZetaParams, report_depth: int,
            lam: float = DEFAULT_LAMBDA, d: int = 2, workers: int | None = None) -> ZetaResult:
    """Zeta measure for a fixed finite mu and an invariant y-marginal; c must be > 0."""
    rows = orbit_table_p1(mu, c, params, report_depth, lam, d, workers)
    return combine(rows, params.beta, params.n, report_depth, "p1", d, mu)


def zeta_p2(c: CostSpec, params: ZetaParams, report_depth: int,
            lam: float = DEFAULT_LAMBDA, d: int = 2, workers: int | None = None) -> ZetaResult:
    """Zeta measure over ordered pairs of orbit measures; c must be > 0."""
    rows = orbit_table_p2(c, params, report_depth, lam, d, workers)
    return combine(rows, params.beta, params.n, report_depth, "p2", d)


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class ConvergenceTable:
    rows: list                       # tuples in TABLE_COLUMNS order
    bracket: tuple = (math.nan, math.nan)   # bracket of the max problem

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for row in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()


def max_bracket(problem) -> tuple:
    """[lo, hi] bracket of sup int c for the instance's (maximised) cost.

    Solved as the minimisation of -c, whose bracket [lo, hi] maps to [-hi, -lo].
    """
    neg = Affine(problem.cost, -1.0, 0.0)
    if isinstance(problem, P1Instance):
        vb, _ = solve_p1(P1Instance(problem.mu, neg, problem.depth, problem.lam, problem.d))
    else:
        vb, _ = solve_p2(P2Instance(neg, problem.kx, problem.ky, problem.lam, problem.d))
    return -vb.hi, -vb.lo


def _interval_distance(v, lo, hi):
    if math.isnan(lo):
        return math.nan
    return max(0.0, lo - v, v - hi)


def zeta_sweep(problem, betas, ns, report_depth: int | None = None, period_mode: str = "dividing",
               workers: int | None = None, with_bracket: bool = True,
               cap: int = DEFAULT_FIX_CAP) -> ConvergenceTable:
    """Rows (beta, n, value, res_x, res_y, gap) for every n in ns, then beta in betas.

    ``problem`` is a P1Instance or P2Instance carrying the positive cost to
    maximise.  Per-orbit plans are computed once per n and reused for every
    beta.  ``gap`` is the distance from the value to the LP bracket of the
    maximisation problem at the instance depth.
    """
    betas, ns = list(betas), list(ns)
    if not betas or not ns:
        raise ValueError("zeta_sweep needs nonempty beta and n lists")
    p1 = isinstance(problem, P1Instance)
    if report_depth is None:
        report_depth = problem.depth if p1 else problem.ky
    bracket = max_bracket(problem) if with_bracket else (math.nan, math.nan)
    rows = []
    for n in ns:
        params = ZetaParams(0.0, n, period_mode, cap)
        if p1:
            table = orbit_table_p1(problem.mu, problem.cost, params, report_depth,
                                   problem.lam, problem.d, workers)
        else:
            table = orbit_table_p2(problem.cost, params, report_depth, problem.lam,
                                   problem.d, workers)
        for beta in betas:
            res = combine(table, float(beta), n, report_depth, "p1" if p1 else "p2",
                          problem.d, problem.mu if p1 else None)
            rx, ry = res.residuals()
            rows.append((float(beta), int(n), res.value, rx, ry,
                         _interval_distance(res.value, *bracket)))
    return ConvergenceTable(rows, bracket)
