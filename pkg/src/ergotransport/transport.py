"""Ergodic transport LPs on cylinder grids, dual pairs and certificates.

Two problems are discretised:

* P1: the x-marginal is a fixed probability mu, the y-marginal ranges over
  shift-invariant probabilities.  Columns are pairs (x-cell u, depth-k
  y-cylinder v); rows fix the x-marginal and impose flow balance on the
  y-marginal.
* P2: both marginals range over invariant probabilities.  Rows impose flow
  balance on each marginal plus total mass one.

Solving the LP with the cell-wise lower (upper) cost bound gives a lower
(upper) bound on the continuum optimum.  The lower bound holds because every
invariant plan projects onto a feasible cylinder plan; the upper bound
because every feasible cylinder plan extends to an invariant plan through the
Markov extension of its marginals (see ``measures.markov_extend``).

Dual pairs use the LP-native sign convention:

    P1:  phi(u) + psi(suffix v) - psi(prefix v) <= c(u, v)
    P2:  alpha + phi(suffix u) - phi(prefix u) + psi(suffix v) - psi(prefix v) <= c(u, v)

i.e. psi plays the role of -psi in the form phi(x) + psi(y) - psi(sigma y) <= c.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cost import CostSpec, SqDistToPoints, TableCost, Affine, XCells
from .errors import NonConvergence, NumericalFailure
from .lp import LpProblem, LpSolution, TransportPlan, lp_solve
from .measures import CylinderMeasure, FiniteMeasure, StationarityConstraints, project_to_depth
from .shift import DEFAULT_LAMBDA, Cylinder, Point, enumerate_fix

CERT_TOL = 1e-9


@dataclass
class P1Instance:
    mu: FiniteMeasure | CylinderMeasure
    cost: CostSpec
    depth: int
    lam: float = DEFAULT_LAMBDA
    d: int = 2

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError("P1 needs depth >= 2")

    def x_side(self):
        """(XCells, masses) of the fixed marginal."""
        if isinstance(self.mu, CylinderMeasure):
            kx = min(self.depth, self.mu.depth)
            m = project_to_depth(self.mu, kx)
            return XCells.cylinders(kx, self.d), np.asarray(m.masses)
        return XCells.atoms(self.mu.keys, self.d), self.mu.masses


@dataclass
class P2Instance:
    cost: CostSpec
    kx: int
    ky: int
    lam: float = DEFAULT_LAMBDA
    d: int = 2

    def __post_init__(self):
        if self.kx < 2 or self.ky < 2:
            raise ValueError("P2 needs depths >= 2")

    @property
    def depth(self):
        return min(self.kx, self.ky)


@dataclass
class ErgodicLp:
    """An assembled cylinder LP: constraint system plus both cost bounds."""

    mode: str
    xcells: XCells
    ky: int
    d: int
    A: np.ndarray
    b: np.ndarray
    cost_lo: np.ndarray   # (nx, ny) grids
    cost_hi: np.ndarray
    x_masses: np.ndarray | None = None

    @property
    def nx(self):
        return self.cost_lo.shape[0]

    @property
    def ny(self):
        return self.cost_lo.shape[1]

    @property
    def n_y_nodes(self):
        return self.ny // self.d

    @property
    def n_x_nodes(self):
        return self.nx // self.d

    def problem(self, bound: str = "lo") -> LpProblem:
        if bound not in ("lo", "hi"):
            raise ValueError("bound is 'lo' or 'hi'")
        c = (self.cost_lo if bound == "lo" else self.cost_hi).reshape(-1)
        return LpProblem(c, self.A, self.b)

    def column(self, u, v) -> int:
        return self.xcells.index_of(u) * self.ny + v.index

    def plan_from_vector(self, x, bound="lo") -> TransportPlan:
        grid = self.cost_lo if bound == "lo" else self.cost_hi
        atoms = []
        value = 0.0
        for k in np.flatnonzero(x > 1e-15):
            i, j = divmod(int(k), self.ny)
            atoms.append((self.xcells.cell(i), Cylinder.from_index(j, self.ky, self.d), float(x[k])))
            value += grid[i, j] * x[k]
        return TransportPlan(atoms, float(value))

    def plan_vector(self, plan: TransportPlan) -> np.ndarray:
        x = np.zeros(self.nx * self.ny)
        for u, v, mass in plan.atoms:
            if not isinstance(v, Cylinder) or v.depth != self.ky:
                raise ValueError(f"plan atom {v} is not a depth-{self.ky} cylinder")
            x[self.column(u, v)] += mass
        return x


def _build(inst) -> ErgodicLp:
    d = inst.d
    if isinstance(inst, P1Instance):
        xcells, a = inst.x_side()
        ky = inst.depth
        lo, hi = inst.cost.bracket_grid(xcells, ky, inst.lam)
        nx, ny = lo.shape
        S = StationarityConstraints(ky, d).matrix()
        A = np.vstack([np.kron(np.eye(nx), np.ones((1, ny))), np.kron(np.ones((1, nx)), S)])
        b = np.concatenate([a, np.zeros(S.shape[0])])
        return ErgodicLp("p1", xcells, ky, d, A, b, lo, hi, np.asarray(a, float))
    xcells = XCells.cylinders(inst.kx, d)
    lo, hi = inst.cost.bracket_grid(xcells, inst.ky, inst.lam)
    nx, ny = lo.shape
    Sx = StationarityConstraints(inst.kx, d).matrix()
    Sy = StationarityConstraints(inst.ky, d).matrix()
    A = np.vstack([np.kron(Sx, np.ones((1, ny))), np.kron(np.ones((1, nx)), Sy), np.ones((1, nx * ny))])
    b = np.zeros(A.shape[0])
    b[-1] = 1.0
    return ErgodicLp("p2", xcells, inst.ky, d, A, b, lo, hi)


def assemble_p1(inst: P1Instance, bound: str = "lo") -> LpProblem:
    return _build(inst).problem(bound)


def assemble_p2(inst: P2Instance, bound: str = "lo") -> LpProblem:
    return _build(inst).problem(bound)


@dataclass
class DualPair:
    """Potentials on x-cells (P1) or x-nodes (P2), y-nodes, and alpha (P2)."""

    phi: np.ndarray
    psi: np.ndarray
    alpha: float = 0.0
    mode: str = "p1"

    def objective(self, system: ErgodicLp) -> float:
        if self.mode == "p1":
            return float(system.x_masses @ self.phi)
        return float(self.alpha)

    def as_dict(self, system: ErgodicLp) -> dict:
        ynode = lambda j: str(Cylinder.from_index(j, system.ky - 1, system.d).word)
        if self.mode == "p1":
            phi = {str(system.xcells.cell(i)): float(v) for i, v in enumerate(self.phi)}
        else:
            kx = system.xcells.depth
            phi = {str(Cylinder.from_index(i, kx - 1, system.d).word): float(v) for i, v in enumerate(self.phi)}
        return {"phi": phi, "psi": {ynode(j): float(v) for j, v in enumerate(self.psi)},
                "alpha": float(self.alpha)}

    @classmethod
    def from_dict(cls, rec: dict, system: ErgodicLp) -> "DualPair":
        d = system.d
        if system.mode == "p1":
            names = [str(system.xcells.cell(i)) for i in range(system.nx)]
        else:
            names = [str(Cylinder.from_index(i, system.xcells.depth - 1, d).word) for i in range(system.n_x_nodes)]
        try:
            phi = np.array([float(rec["phi"][n]) for n in names])
            psi = np.array([float(rec["psi"][str(Cylinder.from_index(j, system.ky - 1, d).word)])
                            for j in range(system.n_y_nodes)])
        except KeyError as exc:
            raise ValueError(f"dual pair is missing entry {exc}") from None
        return cls(phi, psi, float(rec.get("alpha", 0.0)), system.mode)


def dual_lhs(dp: DualPair, system: ErgodicLp) -> np.ndarray:
    """Left-hand side of the admissibility inequality on every column, (nx, ny)."""
    d = system.d
    v = np.arange(system.ny)
    if dp.psi.shape != (system.n_y_nodes,):
        raise ValueError(f"psi has shape {dp.psi.shape}, expected ({system.n_y_nodes},)")
    ey = dp.psi[v % system.n_y_nodes] - dp.psi[v // d]
    if system.mode == "p1":
        if dp.phi.shape != (system.nx,):
            raise ValueError(f"phi has shape {dp.phi.shape}, expected ({system.nx},)")
        return dp.phi[:, None] + ey[None, :]
    if dp.phi.shape != (system.n_x_nodes,):
        raise ValueError(f"phi has shape {dp.phi.shape}, expected ({system.n_x_nodes},)")
    u = np.arange(system.nx)
    ex = dp.phi[u % system.n_x_nodes] - dp.phi[u // d]
    return dp.alpha + ex[:, None] + ey[None, :]


def admissibility_violation(dp: DualPair, system: ErgodicLp) -> float:
    return float(max(0.0, (dual_lhs(dp, system) - system.cost_lo).max()))


def dual_from_lp(sol: LpSolution, system: ErgodicLp) -> DualPair:
    y = sol.y
    if system.mode == "p1":
        return DualPair(y[:system.nx].copy(), y[system.nx:].copy(), 0.0, "p1")
    nxn = system.n_x_nodes
    return DualPair(y[:nxn].copy(), y[nxn:-1].copy(), float(y[-1]), "p2")


@dataclass
class ValueBracket:
    lo: float
    hi: float
    plan_lo: TransportPlan
    plan_hi: TransportPlan
    system: ErgodicLp = field(repr=False)
    lipschitz: float = np.nan
    lam: float = DEFAULT_LAMBDA

    @property
    def width(self):
        return self.hi - self.lo

    def width_bound(self) -> float:
        depth = min(self.system.ky, self.system.xcells.depth or self.system.ky)
        return 2.0 * self.lipschitz * self.lam ** (depth - 1)


def _solve(inst) -> tuple:
    system = _build(inst)
    p_lo = system.problem("lo")
    s_lo = lp_solve(p_lo)
    if not s_lo.optimal:
        raise NumericalFailure(f"lo-cost LP ended {s_lo.status}")
    s_hi = lp_solve(system.problem("hi"), warm=s_lo)
    if not s_hi.optimal:
        raise NumericalFailure(f"hi-cost LP ended {s_hi.status}")
    plan_lo = system.plan_from_vector(s_lo.x, "lo")
    plan_lo.lp = s_lo
    plan_hi = system.plan_from_vector(s_hi.x, "hi")
    plan_hi.lp = s_hi
    bracket = ValueBracket(s_lo.value, max(s_hi.value, s_lo.value), plan_lo, plan_hi, system,
                           inst.cost.lipschitz(inst.lam), inst.lam)
    return bracket, dual_from_lp(s_lo, system)


def solve_p1(inst: P1Instance):
    """(ValueBracket, DualPair) for the fixed-mu / invariant-nu problem."""
    return _solve(inst)


def solve_p2(inst: P2Instance):
    """(ValueBracket, DualPair) for the two-invariant-marginals problem."""
    return _solve(inst)


def plan_marginals(plan: TransportPlan, system: ErgodicLp):
    """(x-mass vector over xcells, y CylinderMeasure-like mass vector)."""
    x = system.plan_vector(plan).reshape(system.nx, system.ny)
    return x.sum(axis=1), x.sum(axis=0)


# ---------------------------------------------------------------------------
# certificates

@dataclass
class Certificate:
    status: str
    duality_gap: float
    max_admissibility_violation: float
    max_support_slack: float
    dual_objective: float
    plan_value: float

    @property
    def certified(self) -> bool:
        return self.status == "certified"


def certify_slackness(plan: TransportPlan, dp: DualPair, system: ErgodicLp,
                      tol: float = CERT_TOL) -> Certificate:
    """Optimality certificate for (plan, dual pair) on the lo-cost LP."""
    if dp.mode != system.mode:
        raise ValueError(f"dual pair is {dp.mode}, system is {system.mode}")
    lhs = dual_lhs(dp, system)
    slack = system.cost_lo - lhs
    viol = float(max(0.0, -slack.min()))
    x = system.plan_vector(plan).reshape(system.nx, system.ny)
    support = x > tol
    support_slack = float(np.abs(slack[support]).max(initial=0.0))
    value = float((x * system.cost_lo).sum())
    dual_obj = dp.objective(system)
    gap = abs(value - dual_obj)
    ok = viol <= tol and support_slack <= tol and gap <= tol
    return Certificate("certified" if ok else "gap-reported", gap, viol, support_slack, dual_obj, value)


# ---------------------------------------------------------------------------
# Lax-Oleinik (min-plus) refinement of dual pairs

@dataclass
class RefineInfo:
    iterations: int
    residual: float


def _potential(w, d):
    n_nodes = w.size // d
    psi, ok = _kernels.bellman_ford(np.ascontiguousarray(w, dtype=float), d, n_nodes + 2, 1e-12)
    if not ok:
        raise NonConvergence("edge weights contain a negative cycle; the seed admits no potential")
    return psi - psi.min()


def min_cycle_mean(w, d):
    """Minimum mean weight of a cycle in the de Bruijn graph (Karp).

    Edge e runs from node e // d to node e % (len(w) // d).
    """
    w = np.asarray(w, dtype=float)
    n_nodes = w.size // d
    W = w.reshape(d, n_nodes)
    pred = (np.arange(w.size) // d).reshape(d, n_nodes)
    D = np.empty((n_nodes + 1, n_nodes))
    D[0] = 0.0
    for k in range(1, n_nodes + 1):
        D[k] = (D[k - 1][pred] + W).min(axis=0)
    ks = np.arange(n_nodes)[:, None]
    return float(((D[-1] - D[:-1]) / (n_nodes - ks)).max(axis=0).min())


def lax_oleinik_refine(inst, seed: DualPair, max_iters: int | None = None, tol: float = 1e-10,
                       system: ErgodicLp | None = None):
    """Alternate backward-orbit infima until the dual pair stops moving.

    P1: psi <- largest potential with psi(s) <= psi(p) + min_u [c(u, e) - phi(u)]
    on every de Bruijn edge e = p -> s (the infimum of accumulated
    cost-minus-phi over backward orbits), then phi(u) <- min_v [c(u, v) +
    psi(prefix v) - psi(suffix v)], the greatest admissible value.  If the
    edge slack min_u [c(u, e) - phi(u)] still has a positive minimum cycle
    mean, phi is raised by it, which keeps a potential in existence.  P2 runs the
    same on the x-graph and the y-graph and then raises alpha to the largest
    admissible constant.  phi never decreases; psi is normalised to min 0.

    Returns ``(DualPair, RefineInfo)``; raises NonConvergence on hitting
    ``max_iters`` (default 10 * d**k).
    """
    if system is None:
        system = _build(inst)
    d = system.d
    C = system.cost_lo
    if max_iters is None:
        max_iters = 10 * d ** system.ky
    v = np.arange(system.ny)
    vp, vs = v // d, v % system.n_y_nodes
    phi = np.array(seed.phi, dtype=float)
    if not np.isfinite(phi).all():
        raise ValueError("seed phi must be finite")
    psi = np.array(seed.psi, dtype=float)
    alpha = float(seed.alpha)
    residual = np.inf
    if system.mode == "p1":
        for it in range(1, max_iters + 1):
            w = (C - phi[:, None]).min(axis=0)
            new_psi = _potential(w, d)
            new_phi = (C + (new_psi[vp] - new_psi[vs])[None, :]).min(axis=1)
            lift = min_cycle_mean((C - new_phi[:, None]).min(axis=0), d)
            residual = max(np.abs(new_phi - phi).max(), lift,
                           np.abs(new_psi - psi).max() if psi.shape == new_psi.shape else np.inf)
            phi, psi = new_phi, new_psi
            if residual <= tol:
                return DualPair(phi, psi, 0.0, "p1"), RefineInfo(it, float(residual))
            if lift > 0:
                phi = phi + lift
    else:
        u = np.arange(system.nx)
        up, us = u // d, u % system.n_x_nodes
        for it in range(1, max_iters + 1):
            ey = psi[vp] - psi[vs]
            wx = (C + ey[None, :]).min(axis=1) - alpha
            new_phi = _potential(wx, d)
            ex = new_phi[up] - new_phi[us]
            wy = (C + ex[:, None]).min(axis=0) - alpha
            new_psi = _potential(wy, d)
            ey = new_psi[vp] - new_psi[vs]
            new_alpha = max(alpha, float((C + ex[:, None] + ey[None, :]).min()))
            residual = max(np.abs(new_phi - phi).max() if phi.shape == new_phi.shape else np.inf,
                           np.abs(new_psi - psi).max() if psi.shape == new_psi.shape else np.inf,
                           abs(new_alpha - alpha))
            phi, psi, alpha = new_phi, new_psi, new_alpha
            if residual <= tol:
                return DualPair(phi, psi, alpha, "p2"), RefineInfo(it, float(residual))
    raise NonConvergence(f"lax_oleinik_refine: no fixed point after {max_iters} iterations "
                         f"(last residual {residual:.3e})", residual=float(residual))


def lipschitz_excess(values: np.ndarray, node_depth: int, d: int, L: float,
                     lam: float = DEFAULT_LAMBDA) -> float:
    """max over node pairs of |f(v) - f(v')| - L lam**m lam/(1-lam), m = common prefix.

    The factor lam/(1-lam) is the geometric tail of backward orbits; it is
    1 for lam = 1/2.  A value <= 0 means the discrete Lipschitz bound holds.
    """
    from .shift import digit_table

    words = digit_table(node_depth, d)
    eq = words[:, None, :] == words[None, :, :]
    m = np.where(eq.all(axis=2), node_depth, (~eq).argmax(axis=2))
    bound = L * lam ** m.astype(float) * lam / (1 - lam)
    diff = np.abs(values[:, None] - values[None, :])
    mask = m < node_depth
    if not mask.any():
        return -np.inf
    return float((diff - bound)[mask].max())


# ---------------------------------------------------------------------------
# ergodic optimisation and Birkhoff diagnostics

def _y_only_label(A: CostSpec):
    if isinstance(A, Affine):
        return _y_only_label(A.inner)
    if isinstance(A, SqDistToPoints):
        if len(A.anchors) != 1:
            raise ValueError("eo_min needs a y-only cost: one anchor label")
        return next(iter(A.anchors))
    if isinstance(A, TableCost):
        if A.x_labels is not None:
            if len(A.x_labels) != 1:
                raise ValueError("eo_min needs a single-row table")
            return A.x_labels[0]
        if A.kx != 0:
            raise ValueError("eo_min needs a table with kx = 0")
        return None
    raise ValueError(f"eo_min needs a y-only cost, got {A.kind}")


def _alphabet(A: CostSpec) -> int:
    if isinstance(A, Affine):
        return _alphabet(A.inner)
    if isinstance(A, SqDistToPoints):
        return next(iter(A.anchors.values())).d
    return getattr(A, "d", 2)


def orbit_average(A: CostSpec, orbit, x=None, lam: float = DEFAULT_LAMBDA) -> float:
    pts = orbit.points()
    return float(np.mean([A.eval_point(x, p, lam) for p in pts]))


def eo_min(A: CostSpec, n_max: int, x=None, lam: float = DEFAULT_LAMBDA, cap: int | None = None):
    """(min orbit average of A over periods <= n_max, minimising orbit).

    Ties go to the first orbit in canonical order.
    """
    if x is None:
        x = _y_only_label(A)
    d = _alphabet(A)
    kwargs = {} if cap is None else {"cap": cap}
    best, best_orbit = np.inf, None
    for n in range(1, n_max + 1):
        for orbit in enumerate_fix(n, d, exact=True, **kwargs):
            val = orbit_average(A, orbit, x, lam)
            if val < best or (val == best and orbit < best_orbit):
                best, best_orbit = val, orbit
    return best, best_orbit


def birkhoff_deficiency_scan(c: CostSpec, alpha: float, horizon: int, samples,
                             lam: float = DEFAULT_LAMBDA) -> float:
    """min over sampled (x, y) and 1 <= n <= horizon of sum_{i<n} c(s^i x, s^i y) - n alpha."""
    best = np.inf
    for x, y in samples:
        total = 0.0
        for n in range(1, horizon + 1):
            total += c.eval_point(x, y, lam) - alpha
            best = min(best, total)
            x, y = x.shift(), y.shift()
    return float(best)


def oscillation_bound(dp: DualPair) -> float:
    """osc(phi) + osc(psi): admissible pairs keep Birkhoff deficiencies above minus this."""
    return float(np.ptp(dp.phi) + np.ptp(dp.psi))


def invariant_core(plan: TransportPlan) -> list:
    """Largest subset of a P2 plan's support closed under the pair shift.

    An atom (u, v) survives if some surviving atom (u', v') has u' starting
    with u shifted and v' starting with v shifted.  An empty result means no
    pair-shift-invariant probability lives on the support.
    """
    cells = [(u, v) for u, v, _ in plan.atoms]
    alive = set(cells)
    changed = True
    while changed:
        changed = False
        for u, v in sorted(alive):
            su, sv = u.word.symbols[1:], v.word.symbols[1:]
            if not any(a.word.symbols[:len(su)] == su and b.word.symbols[:len(sv)] == sv
                       for a, b in alive):
                alive.discard((u, v))
                changed = True
    return [cell for cell in cells if cell in alive]


def support_shift_closed(plan: TransportPlan) -> bool:
    return len(invariant_core(plan)) == len(plan.atoms)
