import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ergotransport import _kernels
from ergotransport._accel import HAS_NUMBA
from ergotransport.lp import _PIV_TOL, _RC_TOL, _STALL, transport_lp

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba unavailable or disabled")


def phase_one_tableau(seed, n=6):
    rng = np.random.default_rng(seed)
    a, b = rng.random(n) + 0.5, rng.random(n) + 0.5
    p = transport_lp(a / a.sum(), b / b.sum(), rng.random((n, n)))
    A = p.A[:-1]
    m, k = A.shape
    T = np.zeros((m + 1, k + m + 1))
    T[:m, :k], T[:m, k:k + m], T[:m, -1] = A, np.eye(m), p.b[:-1]
    T[m, :k], T[m, -1] = -A.sum(axis=0), -p.b[:-1].sum()
    return T, np.arange(k, k + m, dtype=np.int64), k


def de_bruijn_weights(seed, depth=8, d=2):
    rng = np.random.default_rng(seed)
    E = d ** depth
    N = E // d
    h = 3.0 * rng.random(N)
    e = np.arange(E)
    return rng.random(E) + h[e % N] - h[e // d]


@needs_numba
@pytest.mark.parametrize("rule", [_kernels.BLAND, _kernels.DANTZIG, _kernels.STEEPEST])
@pytest.mark.parametrize("seed", range(4))
def test_simplex_paths_agree(rule, seed):
    T, basis, k = phase_one_tableau(seed)
    T2, basis2 = T.copy(), basis.copy()
    r1 = _kernels._simplex_loop_jit(T, basis, k, _RC_TOL, _PIV_TOL, 10 ** 5, rule, _STALL)
    r2 = _kernels._simplex_loop_np(T2, basis2, k, _RC_TOL, _PIV_TOL, 10 ** 5, rule, _STALL)
    assert tuple(r1) == tuple(r2)
    assert np.array_equal(basis, basis2)
    assert np.allclose(T, T2, atol=1e-12)


@needs_numba
@pytest.mark.parametrize("seed", range(4))
def test_bellman_ford_paths_agree(seed):
    w = de_bruijn_weights(seed)
    p1, ok1 = _kernels._bellman_ford_jit(w, 2, 200, 1e-12)
    p2, ok2 = _kernels._bellman_ford_np(w, 2, 200, 1e-12)
    assert ok1 == ok2
    assert np.allclose(p1, p2, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_bellman_ford_potential_is_feasible(seed):
    w = de_bruijn_weights(seed)
    psi, ok = _kernels.bellman_ford(w, 2, 200, 1e-12)
    assert ok
    e = np.arange(w.size)
    N = w.size // 2
    # edge e runs from node e // d to node e % N
    assert np.all(psi[e % N] - psi[e // 2] <= w + 1e-12)


def test_bellman_ford_detects_negative_cycle():
    w = -np.ones(2 ** 4)
    _, ok = _kernels.bellman_ford(w, 2, 100, 1e-12)
    assert not ok


@needs_numba
def test_dual_simplex_paths_agree():
    T, basis, k = phase_one_tableau(9)
    _kernels._simplex_loop_np(T, basis, k, _RC_TOL, _PIV_TOL, 10 ** 5, _kernels.BLAND, _STALL)
    T[:-1, -1] -= 0.3  # push some rows infeasible while keeping reduced costs
    T2, basis2 = T.copy(), basis.copy()
    r1 = _kernels._dual_simplex_loop_jit(T, basis, k, 1e-13, _PIV_TOL, 10 ** 4)
    r2 = _kernels._dual_simplex_loop_np(T2, basis2, k, 1e-13, _PIV_TOL, 10 ** 4)
    assert tuple(r1) == tuple(r2)
    assert np.array_equal(basis, basis2)


SCRIPT = """
import json, numpy as np
from ergotransport._accel import backend
from ergotransport.lp import classical_ot
from ergotransport.transport import P1Instance, solve_p1
from ergotransport.cost import SqDistToPoints
from ergotransport.measures import FiniteMeasure
from ergotransport.shift import Point
rng = np.random.default_rng(5)
C = rng.random((5, 5))
plan = classical_ot(np.full(5, 0.2), np.full(5, 0.2), C)
cost = SqDistToPoints({"x0": Point.parse("|01"), "x1": Point.parse("|10")})
vb, _ = solve_p1(P1Instance(FiniteMeasure((("x0", 0.5), ("x1", 0.5))), cost, 5))
print(json.dumps({"backend": backend(), "ot": plan.value, "lo": vb.lo, "hi": vb.hi}))
"""


def run_script(disable):
    env = dict(os.environ)
    env.pop("ERGOTRANSPORT_DISABLE_NUMBA", None)
    if disable:
        env["ERGOTRANSPORT_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_numpy_fallback_matches():
    plain = run_script(disable=True)
    assert plain["backend"] == "numpy"
    default = run_script(disable=False)
    for key in ("ot", "lo", "hi"):
        assert plain[key] == pytest.approx(default[key], abs=1e-12)
