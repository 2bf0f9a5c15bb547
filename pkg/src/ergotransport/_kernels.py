"""Hot loops: tableau pivoting and min-plus relaxation on de Bruijn graphs.

Each kernel exists twice: an explicit-loop version compiled with numba and a
vectorised numpy version.  ``_accel.HAS_NUMBA`` picks one at import time; both
are importable directly so tests and benchmarks can compare them.
"""

import numpy as np

from ._accel import HAS_NUMBA, njit

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2

# pivot rules
BLAND = 0
DANTZIG = 1  # most negative reduced cost; Bland while degenerate pivots stall
STEEPEST = 2  # steepest edge; Bland while degenerate pivots stall


# --------------------------------------------------------------------------
# simplex


@njit(cache=True, nogil=True)
def _pivot_jit(T, r, q):
    m1, n1 = T.shape
    inv = 1.0 / T[r, q]
    for j in range(n1):
        T[r, j] *= inv
    T[r, q] = 1.0
    for i in range(m1):
        if i == r:
            continue
        f = T[i, q]
        if f != 0.0:
            for j in range(n1):
                T[i, j] -= f * T[r, j]
            T[i, q] = 0.0


@njit(cache=True, nogil=True)
def _simplex_loop_jit(T, basis, n_enter, tol, piv_tol, max_iter, rule, stall_limit):
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    it = 0
    stall = 0
    while it < max_iter:
        q = -1
        if rule == BLAND or stall >= stall_limit:
            for j in range(n_enter):
                if T[m, j] < -tol:
                    q = j
                    break
        elif rule == DANTZIG:
            best_rc = -tol
            for j in range(n_enter):
                if T[m, j] < best_rc:
                    best_rc = T[m, j]
                    q = j
        else:
            # steepest edge on the current tableau: rc_j^2 / (1 + |T[:, j]|^2)
            best_score = 0.0
            for j in range(n_enter):
                rc = T[m, j]
                if rc < -tol:
                    nrm = 1.0
                    for i in range(m):
                        nrm += T[i, j] * T[i, j]
                    score = rc * rc / nrm
                    if score > best_score:
                        best_score = score
                        q = j
        if q < 0:
            return OPTIMAL, it
        r = -1
        best = np.inf
        for i in range(m):
            a = T[i, q]
            if a > piv_tol:
                ratio = T[i, rhs] / a
                if r < 0 or ratio < best - 1e-12:
                    r = i
                    best = ratio
                elif ratio <= best + 1e-12 and basis[i] < basis[r]:
                    r = i
                    if ratio < best:
                        best = ratio
        if r < 0:
            return UNBOUNDED, it
        if best > 1e-12:
            stall = 0
        else:
            stall += 1
        _pivot_jit(T, r, q)
        basis[r] = q
        it += 1
    return ITERATION_LIMIT, it


def _pivot_np(T, r, q):
    T[r] /= T[r, q]
    T[r, q] = 1.0
    col = T[:, q].copy()
    col[r] = 0.0
    nz = np.flatnonzero(col)
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])
        T[nz, q] = 0.0


def _simplex_loop_np(T, basis, n_enter, tol, piv_tol, max_iter, rule, stall_limit):
    m = T.shape[0] - 1
    it = 0
    stall = 0
    while it < max_iter:
        row = T[m, :n_enter]
        if rule == BLAND or stall >= stall_limit:
            neg = np.flatnonzero(row < -tol)
            if neg.size == 0:
                return OPTIMAL, it
            q = int(neg[0])
        elif rule == DANTZIG:
            q = int(np.argmin(row))
            if not row[q] < -tol:
                return OPTIMAL, it
        else:
            neg = np.flatnonzero(row < -tol)
            if neg.size == 0:
                return OPTIMAL, it
            nrm = 1.0 + (T[:m, neg] ** 2).sum(axis=0)
            q = int(neg[np.argmax(row[neg] ** 2 / nrm)])
        col = T[:m, q]
        rows = np.flatnonzero(col > piv_tol)
        if rows.size == 0:
            return UNBOUNDED, it
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        # Bland: among (near-)ties leave the smallest basic index
        ties = rows[ratios <= best + 1e-12]
        r = int(ties[np.argmin(basis[ties])])
        stall = 0 if best > 1e-12 else stall + 1
        _pivot_np(T, r, q)
        basis[r] = q
        it += 1
    return ITERATION_LIMIT, it


# --------------------------------------------------------------------------
# min-plus relaxation (Bellman-Ford) on the de Bruijn graph
#
# Nodes are words of length k-1 (N = d**(k-1) of them), edges are words of
# length k: edge e runs from prefix(e) = e // d to suffix(e) = e % N.
# ``potential_from_weights`` returns the largest psi <= 0 with
# psi[suffix(e)] <= psi[prefix(e)] + w[e]; that is min(0, shortest path).


@njit(cache=True, nogil=True)
def _bellman_ford_jit(w, d, max_sweeps, tol):
    E = w.shape[0]
    N = E // d
    psi = np.zeros(N)
    new = np.zeros(N)
    for sweep in range(max_sweeps):
        changed = False
        for s in range(N):
            best = psi[s]
            for a in range(d):
                e = a * N + s
                cand = psi[e // d] + w[e]
                if cand < best:
                    best = cand
            new[s] = best
        for s in range(N):
            if new[s] < psi[s] - tol:
                changed = True
            psi[s] = new[s]
        if not changed:
            return psi, True
    return psi, False


def _bellman_ford_np(w, d, max_sweeps, tol):
    E = w.shape[0]
    N = E // d
    W = w.reshape(d, N)
    pred = (np.arange(E) // d).reshape(d, N)
    psi = np.zeros(N)
    for _ in range(max_sweeps):
        new = np.minimum(psi, (psi[pred] + W).min(axis=0))
        changed = bool(np.any(new < psi - tol))
        psi = new
        if not changed:
            return psi, True
    return psi, False


# --------------------------------------------------------------------------
# dual simplex clean-up: the basis is dual feasible, some basic values < 0


@njit(cache=True, nogil=True)
def _dual_simplex_loop_jit(T, basis, n_enter, tol, piv_tol, max_iter):
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    it = 0
    while it < max_iter:
        r = -1
        worst = -tol
        for i in range(m):
            if T[i, rhs] < worst:
                worst = T[i, rhs]
                r = i
        if r < 0:
            return OPTIMAL, it
        q = -1
        best = np.inf
        for j in range(n_enter):
            a = T[r, j]
            if a < -piv_tol:
                ratio = T[m, j] / -a
                if ratio < best - 1e-12:
                    best = ratio
                    q = j
        if q < 0:
            return UNBOUNDED, it  # primal infeasible
        _pivot_jit(T, r, q)
        basis[r] = q
        it += 1
    return ITERATION_LIMIT, it


def _dual_simplex_loop_np(T, basis, n_enter, tol, piv_tol, max_iter):
    m = T.shape[0] - 1
    it = 0
    while it < max_iter:
        col = T[:m, -1]
        r = int(np.argmin(col))
        if not col[r] < -tol:
            return OPTIMAL, it
        row = T[r, :n_enter]
        cand = np.flatnonzero(row < -piv_tol)
        if cand.size == 0:
            return UNBOUNDED, it
        ratios = T[m, cand] / -row[cand]
        best = ratios.min()
        q = int(cand[np.flatnonzero(ratios < best + 1e-12)[0]])
        _pivot_np(T, r, q)
        basis[r] = q
        it += 1
    return ITERATION_LIMIT, it



if HAS_NUMBA:
    simplex_loop = _simplex_loop_jit
    dual_simplex_loop = _dual_simplex_loop_jit
    bellman_ford = _bellman_ford_jit
else:
    simplex_loop = _simplex_loop_np
    dual_simplex_loop = _dual_simplex_loop_np
    bellman_ford = _bellman_ford_np
