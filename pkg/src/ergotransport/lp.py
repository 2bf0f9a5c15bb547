"""Dense-tableau simplex and finite optimal transport.

``lp_solve`` handles ``min c.x  s.t.  A x = b, x >= 0``.  Phase 1 uses one
artificial per row; rows that phase 1 proves redundant are dropped and get a
zero multiplier.  After the pivots stop, the basis is re-solved with LAPACK
(iterative refinement) and the tableau is rebuilt from it if the refined
reduced costs show the pivoting drifted.  Duals are free multipliers of the
equality rows, so the dual problem is ``max b.y  s.t.  A^T y <= c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NumericalFailure

TARGET_TOL = 1e-9
HARD_TOL = 1e-6
_RC_TOL = 1e-11
_PIV_TOL = 1e-11
_STALL = 50
_PERTURB_EPS = 1e-6
_PERTURB_SEED = 20240917
_COLGEN_MIN_COLS = 4096
_COLGEN_RATIO = 8
_RULES = {"bland": _kernels.BLAND, "dantzig": _kernels.DANTZIG, "steepest": _kernels.STEEPEST}


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    col_labels: list | None = None
    row_labels: list | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.A.ndim != 2 or self.A.shape != (self.b.size, self.c.size):
            raise ValueError(f"inconsistent LP dimensions: A {self.A.shape}, b {self.b.shape}, c {self.c.shape}")
        if not (np.isfinite(self.A).all() and np.isfinite(self.b).all() and np.isfinite(self.c).all()):
            raise ValueError("LP data must be finite")

    @property
    def shape(self):
        return self.A.shape

    def with_objective(self, c) -> "LpProblem":
        return LpProblem(c, self.A, self.b, self.col_labels, self.row_labels)


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    value: float = math.nan
    basis: np.ndarray | None = None
    kept_rows: np.ndarray | None = None
    iterations: int = 0
    residuals: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def reduced_costs(self, p: LpProblem) -> np.ndarray:
        return p.c - p.A.T @ self.y


def _phase_one(A, b, max_iter, rule):
    m, n = A.shape
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = np.arange(n, n + m, dtype=np.int64)
    status, it = _kernels.simplex_loop(T, basis, n, _RC_TOL, _PIV_TOL, max_iter, rule, _STALL)
    return T, basis, status, it


def _drive_out_artificials(T, basis, n):
    m = T.shape[0] - 1
    redundant = []
    for i in range(m):
        if basis[i] < n:
            continue
        row = np.abs(T[i, :n])
        cand = np.flatnonzero(row > 1e-9)
        if cand.size:
            q = int(cand[0])
            _kernels._pivot_np(T, i, q)
            basis[i] = q
        else:
            redundant.append(i)
    return redundant


def _refine(A, b, c, basis):
    B = A[:, basis]
    xB = np.linalg.solve(B, b)
    y = np.linalg.solve(B.T, c[basis])
    # one round of residual correction
    xB += np.linalg.solve(B, b - B @ xB)
    y += np.linalg.solve(B.T, c[basis] - B.T @ y)
    return xB, y


def _rebuild_tableau(A, b, c, basis, y):
    m, n = A.shape
    T = np.zeros((m + 1, n + 1))
    T[:m, :n] = np.linalg.solve(A[:, basis], A)
    T[:m, -1] = np.linalg.solve(A[:, basis], b)
    T[m, :n] = c - A.T @ y
    T[m, -1] = -c[basis] @ T[:m, -1]
    return T


def _residuals(p, x, y):
    r = p.c - p.A.T @ y
    primal = float(np.abs(p.A @ x - p.b).max()) if p.b.size else 0.0
    return {
        "primal": max(primal, float(max(0.0, -x.min(initial=0.0)))),
        "dual": float(max(0.0, -r.min(initial=0.0))),
        "slackness": float(np.abs(x * r).max(initial=0.0)),
        "gap": float(abs(p.c @ x - p.b @ y)),
    }


def _perturbation(size, seed=_PERTURB_SEED):
    return np.random.default_rng(seed).random(size)


def _restore_rhs(T, Ak, bk, c, basis):
    xB = np.linalg.solve(Ak[:, basis], bk)
    T[:-1, -1] = xB
    T[-1, -1] = -c[basis] @ xB


def lp_solve(p: LpProblem, warm: LpSolution | None = None, max_iter: int | None = None,
             tol: float = TARGET_TOL, pivot_rule: str = "steepest",
             perturb: bool | None = None, columns: str = "auto") -> LpSolution:
    """Solve ``min c.x, A x = b, x >= 0``; deterministic for fixed input.

    ``warm`` may carry the basis of a previous solve over the same constraint
    system (e.g. the lo-cost LP when solving the hi-cost LP); phase 1 is then
    skipped if that basis is still primal feasible.

    Pivot rules: ``"bland"`` (lowest index throughout), ``"dantzig"`` (most
    negative reduced cost) and ``"steepest"`` (reduced cost scaled by the
    column norm).  The last two fall back to Bland's rule after a run of
    degenerate pivots, so none of them can cycle.  Ties go to the lowest index.

    Transport LPs are highly degenerate.  Unless ``perturb`` is false (the
    default for Bland's rule) the right-hand side is shifted by a fixed,
    seeded amount that keeps the problem feasible, the perturbed problem is
    solved, and the exact right-hand side is then restored with a few dual
    simplex pivots from the final basis.

    ``columns="generate"`` (chosen automatically for wide problems) solves a
    sequence of restricted problems over a growing column set, pricing all
    columns with the restricted duals; ``"all"`` pivots on the full tableau.
    """
    A, b, c = p.A, p.b, p.c
    m, n = A.shape
    rule = _RULES[pivot_rule]
    if columns == "auto":
        columns = "generate" if n >= _COLGEN_MIN_COLS and n > _COLGEN_RATIO * m else "all"
    if columns == "generate":
        return _solve_by_columns(p, warm, max_iter, tol, pivot_rule, perturb)
    if columns != "all":
        raise ValueError(f"columns must be 'auto', 'all' or 'generate', got {columns!r}")
    if perturb is None:
        perturb = rule != _kernels.BLAND
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    total_iter = 0
    eps = _PERTURB_EPS * max(1.0, float(np.abs(b).max(initial=0.0)))

    T = basis = None
    kept = np.arange(m)
    if warm is not None and warm.basis is not None and warm.kept_rows is not None:
        kept = np.asarray(warm.kept_rows)
        basis = np.array(warm.basis, dtype=np.int64)
        try:
            xB = np.linalg.solve(A[kept][:, basis], b[kept])
            if xB.min(initial=0.0) < -1e-12:
                raise np.linalg.LinAlgError
            y0 = np.linalg.solve(A[kept][:, basis].T, c[basis])
            T = _rebuild_tableau(A[kept], b[kept], c, basis, y0)
            T[:-1, -1] = np.maximum(T[:-1, -1], 0.0)
            if perturb:
                # shift in basis space: b' = b + eps * B s stays feasible
                T[:-1, -1] += eps * _perturbation(kept.size)
        except np.linalg.LinAlgError:
            T, basis, kept = None, None, np.arange(m)

    if T is None:
        bp = b
        if perturb and n:
            # b' = b + eps * A r with r > 0 is attained by x + eps * r
            bp = b + eps * (A @ _perturbation(n))
        sign = np.where(bp < 0, -1.0, 1.0)
        As, bs = A * sign[:, None], bp * sign
        T1, basis, status, it = _phase_one(As, bs, max_iter, rule)
        total_iter += it
        if status == _kernels.ITERATION_LIMIT:
            raise NumericalFailure(f"phase 1 hit the iteration cap ({max_iter})")
        scale = max(1.0, float(np.abs(bs).max(initial=0.0)))
        if -T1[m, -1] > 1e-9 * scale:
            return LpSolution("infeasible", iterations=total_iter)
        redundant = _drive_out_artificials(T1, basis, n)
        kept = np.array([i for i in range(m) if i not in set(redundant)], dtype=np.int64)
        basis = basis[kept].copy()
        T = np.empty((kept.size + 1, n + 1))
        T[:-1, :n] = T1[kept, :n]
        T[:-1, -1] = np.maximum(T1[kept, -1], 0.0)
        cB = c[basis]
        T[-1, :n] = c - cB @ T[:-1, :n]
        T[-1, -1] = -cB @ T[:-1, -1]

    Ak, bk = A[kept], b[kept]
    restored = not perturb
    for _ in range(6):
        status, it = _kernels.simplex_loop(T, basis, n, _RC_TOL, _PIV_TOL, max_iter - total_iter, rule, _STALL)
        total_iter += it
        if status == _kernels.UNBOUNDED:
            return LpSolution("unbounded", iterations=total_iter, basis=basis, kept_rows=kept)
        if status == _kernels.ITERATION_LIMIT:
            raise NumericalFailure(f"simplex hit the iteration cap ({max_iter})")
        if not restored:
            restored = True
            _restore_rhs(T, Ak, bk, c, basis)
            status, it = _kernels.dual_simplex_loop(T, basis, n, 1e-13, _PIV_TOL, max_iter - total_iter)
            total_iter += it
            if status == _kernels.ITERATION_LIMIT:
                raise NumericalFailure(f"dual simplex hit the iteration cap ({max_iter})")
            if status == _kernels.UNBOUNDED:
                return LpSolution("infeasible", iterations=total_iter)
            continue
        xB, yk = _refine(Ak, bk, c, basis)
        rc = c - Ak.T @ yk
        if rc.min(initial=0.0) >= -tol and xB.min(initial=0.0) >= -tol:
            break
        # drift: restart pivoting from a freshly factorised tableau
        T = _rebuild_tableau(Ak, bk, c, basis, yk)
        T[:-1, -1] = np.maximum(T[:-1, -1], 0.0)

    x = np.zeros(n)
    x[basis] = np.maximum(xB, 0.0)
    y = np.zeros(m)
    y[kept] = yk
    sol = LpSolution("optimal", x, y, float(c @ x), basis.copy(), kept, total_iter)
    sol.residuals = _residuals(p, x, y)
    worst = max(sol.residuals.values())
    if worst > HARD_TOL * max(1.0, float(np.abs(c).max(initial=0.0))):
        raise NumericalFailure(f"LP residuals too large after refinement: {sol.residuals}")
    return sol


def _remap(sol: LpSolution | None, old_cols, new_cols):
    if sol is None or sol.basis is None:
        return None
    full = np.asarray(old_cols)[sol.basis]
    pos = np.searchsorted(new_cols, full)
    return LpSolution("warm", basis=pos.astype(np.int64), kept_rows=sol.kept_rows)


def _grow(J, rc, batch, price_tol):
    rc = rc.copy()
    rc[J] = np.inf
    cand = np.flatnonzero(rc < -price_tol)
    if cand.size == 0:
        return None
    if cand.size > batch:
        cand = cand[np.argsort(rc[cand], kind="stable")[:batch]]
    return np.union1d(J, cand)


def _solve_by_columns(p, warm, max_iter, tol, pivot_rule, perturb):
    A, b, c = p.A, p.b, p.c
    m, n = A.shape
    batch = max(2 * m, 200)
    scale = max(1.0, float(np.abs(c).max(initial=0.0)))
    price_tol = _RC_TOL * scale
    kw = dict(max_iter=max_iter, tol=tol, pivot_rule=pivot_rule, perturb=perturb, columns="all")
    total = 0

    J = np.argsort(c, kind="stable")[:batch]
    sub_warm = None
    if warm is not None and warm.basis is not None and warm.kept_rows is not None:
        J = np.union1d(J, warm.basis)
        sub_warm = LpSolution("warm", basis=np.searchsorted(J, warm.basis).astype(np.int64),
                              kept_rows=warm.kept_rows)
    J = np.unique(J)
    if sub_warm is not None:
        try:
            xB = np.linalg.solve(A[warm.kept_rows][:, warm.basis], b[warm.kept_rows])
            if xB.min(initial=0.0) < -1e-12:
                sub_warm = None
        except np.linalg.LinAlgError:
            sub_warm = None

    if sub_warm is None:
        # feasibility: restricted phase 1 with one artificial per row
        sign = np.where(b < 0, -1.0, 1.0)
        art = np.diag(sign)
        prev, prev_cols = None, None
        while True:
            cols = np.concatenate([np.arange(n, n + m), J])
            sub = LpProblem(np.concatenate([np.ones(m), np.zeros(J.size)]), np.hstack([art, A[:, J]]), b)
            ws = None
            if prev is not None:
                ws = _remap(prev, prev_cols, cols) if np.all(np.diff(cols[m:]) > 0) else None
            s = lp_solve(sub, warm=ws, **kw)
            total += s.iterations
            if not s.optimal:
                raise NumericalFailure(f"restricted phase 1 ended {s.status}")
            if s.value <= 1e-9 * max(1.0, float(np.abs(b).max(initial=0.0))):
                if (s.basis >= m).all():
                    sub_warm = LpSolution("warm", basis=(s.basis - m).astype(np.int64), kept_rows=s.kept_rows)
                break
            J2 = _grow(J, -(A.T @ s.y), batch, price_tol)
            if J2 is None:
                return LpSolution("infeasible", iterations=total)
            prev, prev_cols = s, cols
            J = J2

    while True:
        s = lp_solve(LpProblem(c[J], A[:, J], b), warm=sub_warm, **kw)
        total += s.iterations
        if s.status == "infeasible":
            raise NumericalFailure("restricted problem lost feasibility")
        if not s.optimal:
            return LpSolution(s.status, iterations=total)
        J2 = _grow(J, c - A.T @ s.y, batch, price_tol)
        if J2 is None:
            break
        sub_warm = _remap(s, J, J2)
        J = J2

    x = np.zeros(n)
    x[J] = s.x
    sol = LpSolution("optimal", x, s.y.copy(), float(c @ x), J[s.basis].astype(np.int64),
                     s.kept_rows, total)
    sol.residuals = _residuals(p, x, sol.y)
    worst = max(sol.residuals.values())
    if worst > HARD_TOL * scale:
        raise NumericalFailure(f"LP residuals too large after refinement: {sol.residuals}")
    return sol


# ---------------------------------------------------------------------------
# transport plans

@dataclass
class TransportPlan:
    atoms: list
    value: float
    lp: LpSolution | None = field(default=None, repr=False)

    def x_marginal(self) -> dict:
        out = {}
        for u, _, mass in self.atoms:
            out[u] = out.get(u, 0.0) + mass
        return out

    def y_marginal(self) -> dict:
        out = {}
        for _, v, mass in self.atoms:
            out[v] = out.get(v, 0.0) + mass
        return out

    def to_rows(self) -> list:
        return [(str(u), str(v), mass) for u, v, mass in self.atoms]


def transport_lp(a, b, C) -> LpProblem:
    a, b, C = np.asarray(a, float), np.asarray(b, float), np.asarray(C, float)
    n, m = C.shape
    if a.shape != (n,) or b.shape != (m,):
        raise ValueError(f"cost shape {C.shape} does not match marginals {a.shape}, {b.shape}")
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A[n + j, j::m] = 1.0
    return LpProblem(C.reshape(-1), A, np.concatenate([a, b]))


def classical_ot(mu, nu, C, maximize: bool = False) -> TransportPlan:
    """Optimal plan between two finite measures (vertex solution).

    ``mu``/``nu`` are :class:`FiniteMeasure` objects or plain mass vectors.
    With ``maximize=True`` the plan maximises sum C*pi (costs are negated
    for the solve, the reported value is the maximum).
    """
    xs, a = _keys_and_masses(mu)
    ys, b = _keys_and_masses(nu)
    C = np.asarray(C, dtype=float)
    p = transport_lp(a, b, -C if maximize else C)
    sol = lp_solve(p)
    if not sol.optimal:
        raise NumericalFailure(f"transport LP ended {sol.status}")
    m = len(ys)
    atoms = [(xs[k // m], ys[k % m], float(sol.x[k])) for k in np.flatnonzero(sol.x > 1e-15)]
    value = float(sum(C[k // m, k % m] * sol.x[k] for k in np.flatnonzero(sol.x)))
    return TransportPlan(atoms, value, sol)


def _keys_and_masses(meas):
    if hasattr(meas, "atoms"):
        return meas.keys, meas.masses
    masses = np.asarray(meas, dtype=float)
    return list(range(masses.size)), masses


# ---------------------------------------------------------------------------
# uniqueness probe

@dataclass
class UniquenessReport:
    unique: bool
    witness: np.ndarray | None
    tied_columns: int
    method: str = "optimal-face"


def optimal_face_probe(p: LpProblem, s: LpSolution, tol: float = TARGET_TOL) -> UniquenessReport:
    """Decide whether the optimal vertex ``s`` is the only optimal solution.

    Every optimal solution vanishes on columns whose reduced cost (for the
    optimal duals ``s.y``) is positive, so the optimal face is the feasible
    set restricted to zero-reduced-cost columns.  On that face the optimum
    is unique iff the nonbasic columns cannot be raised, which one LP
    (maximise their sum) decides.  When they can, the maximiser is an
    alternative optimal vertex and is returned as the witness.
    """
    if not s.optimal:
        raise ValueError("optimal_face_probe needs an optimal solution")
    rc = s.reduced_costs(p)
    scale = max(1.0, float(np.abs(p.c).max(initial=0.0)))
    face = np.flatnonzero(rc <= tol * scale)
    nonbasic = np.setdiff1d(face, s.basis)
    if nonbasic.size == 0:
        return UniquenessReport(True, None, 0)
    obj = np.where(np.isin(face, nonbasic), -1.0, 0.0)
    sub = LpProblem(obj, p.A[:, face], p.b)
    res = lp_solve(sub)
    if res.optimal and -res.value > tol:
        witness = np.zeros(p.c.size)
        witness[face] = res.x
        return UniquenessReport(False, witness, int(nonbasic.size))
    return UniquenessReport(True, None, int(nonbasic.size))


def perturb_problem(p: LpProblem, r: float, seed: int | None = 0) -> LpProblem:
    """Add ``r * U(0, 1)`` noise to the objective; generic ties split."""
    rng = np.random.default_rng(seed)
    return p.with_objective(p.c + r * rng.random(p.c.size))
