"""Compare the numba and numpy kernel paths.

    python benchmarks/bench_kernels.py [--size 40] [--graph-depth 16] [--repeat 3]

Times each kernel on identical inputs with both implementations and checks
that they agree:

* primal simplex (steepest edge and Dantzig) on a random dense transport LP,
* dual simplex restoring feasibility after the marginals move,
* Bellman-Ford potentials on a de Bruijn graph whose weights have mixed signs.

The first numba call includes compilation (or a cache load), so it is
reported separately from the steady-state best time.
"""

import argparse
import time

import numpy as np

from ergotransport import _kernels
from ergotransport._accel import HAS_NUMBA
from ergotransport.lp import _RC_TOL, _PIV_TOL, _STALL, transport_lp


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def timed(name_fn_pairs, repeat):
    rows = []
    for name, fn in name_fn_pairs:
        if name == "numba":
            t0 = time.perf_counter()
            fn()
            rows.append(("numba (first call)", time.perf_counter() - t0, None))
        t, out = best_of(fn, repeat)
        rows.append((name, t, out))
    return rows


def _paths(jit, np_):
    return ([("numba", jit)] if HAS_NUMBA else []) + [("numpy", np_)]


def transport_tableau(size, seed=0):
    """Phase-2 starting tableau of a random size x size transport LP."""
    rng = np.random.default_rng(seed)
    a = rng.random(size) + 0.5
    b = rng.random(size) + 0.5
    a, b = a / a.sum(), b / b.sum()
    p = transport_lp(a, b, rng.random((size, size)))
    A, c = p.A[:-1], p.c  # drop one redundant row
    m, n = A.shape
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = p.b[:-1]
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -T[:m, -1].sum()
    basis = np.arange(n, n + m, dtype=np.int64)
    _kernels._simplex_loop_np(T, basis, n, _RC_TOL, _PIV_TOL, 10 ** 6, _kernels.BLAND, _STALL)
    T2 = np.empty((m + 1, n + 1))
    T2[:m, :n], T2[:m, -1] = T[:m, :n], T[:m, -1]
    T2[m, :n] = c - c[basis] @ T[:m, :n]
    T2[m, -1] = -c[basis] @ T[:m, -1]
    return A, c, T2, basis


def bench_simplex(size, repeat, rule, label):
    A, c, T0, basis0 = transport_tableau(size)
    m, n = A.shape

    def run(loop):
        T, bas = T0.copy(), basis0.copy()
        status, it = loop(T, bas, n, _RC_TOL, _PIV_TOL, 10 ** 6, rule, _STALL)
        return status, it, -T[m, -1]

    rows = timed([(k, (lambda f=f: run(f))) for k, f in
                  _paths(_kernels._simplex_loop_jit, _kernels._simplex_loop_np)], repeat)
    return f"primal simplex ({label}), transport {size}x{size} ({m}x{n})", rows


def bench_dual_simplex(size, repeat):
    A, c, T0, basis0 = transport_tableau(size)
    m, n = A.shape
    _kernels._simplex_loop_np(T0, basis0, n, _RC_TOL, _PIV_TOL, 10 ** 6, _kernels.STEEPEST, _STALL)
    # move the marginals: the optimal basis stays dual feasible, not primal
    rng = np.random.default_rng(7)
    a2, c2 = rng.random(size) + 0.5, rng.random(size) + 0.5
    b2 = np.concatenate([a2 / a2.sum(), (c2 / c2.sum())[:-1]])
    xB = np.linalg.solve(A[:, basis0], b2)
    base = T0.copy()
    base[:m, -1] = xB
    base[m, -1] = -c[basis0] @ xB

    def run(loop):
        T, bas = base.copy(), basis0.copy()
        status, it = loop(T, bas, n, 1e-13, _PIV_TOL, 10 ** 6)
        return status, it, -T[m, -1]

    rows = timed([(k, (lambda f=f: run(f))) for k, f in
                  _paths(_kernels._dual_simplex_loop_jit, _kernels._dual_simplex_loop_np)], repeat)
    return f"dual simplex re-solve, transport {size}x{size}", rows


def bench_bellman_ford(depth, repeat, d=2):
    rng = np.random.default_rng(3)
    E = d ** depth
    N = E // d
    h = 5.0 * rng.random(N)
    e = np.arange(E)
    w = rng.random(E) + h[e % N] - h[e // d]  # mixed signs, no negative cycle

    def run(f):
        psi, ok = f(w, d, N + 2, 1e-12)
        return ok, float(psi.sum())

    rows = timed([(k, (lambda f=f: run(f))) for k, f in
                  _paths(_kernels._bellman_ford_jit, _kernels._bellman_ford_np)], repeat)
    return f"bellman-ford, de Bruijn depth {depth} ({E} edges)", rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=40, help="transport LP is size x size")
    ap.add_argument("--graph-depth", type=int, default=16, help="de Bruijn word length")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAS_NUMBA:
        print("numba disabled or missing: only the numpy path is timed")
    results = [
        bench_simplex(args.size, args.repeat, _kernels.STEEPEST, "steepest edge"),
        bench_simplex(args.size, args.repeat, _kernels.DANTZIG, "dantzig"),
        bench_dual_simplex(args.size, args.repeat),
        bench_bellman_ford(args.graph_depth, args.repeat),
    ]
    for title, rows in results:
        print(title)
        for name, t, out in rows:
            extra = "" if out is None else f"  -> {out}"
            print(f"  {name:<20s} {t * 1e3:10.2f} ms{extra}")
        outs = [out for _, _, out in rows if out is not None]
        if len(outs) == 2:
            a, b = outs
            same = bool(np.isclose(a[-1], b[-1], atol=1e-9))
            print(f"  paths agree: {same}")


if __name__ == "__main__":
    main()
