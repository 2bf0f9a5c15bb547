import sys

import numpy as np
import pytest

from ergotransport import transport
from ergotransport.cost import MinSumSq, SqDistToPoints
from ergotransport.measures import FiniteMeasure
from ergotransport.shift import Point

DUALITY_TOL = 1e-9

# every LP bracket solved anywhere in the suite is checked here
SOLVE_LOG = []

_original_solve = transport._solve


def _checked_solve(inst):
    bracket, dp = _original_solve(inst)
    system = bracket.system
    cert = transport.certify_slackness(bracket.plan_lo, dp, system, DUALITY_TOL)
    dual_obj = dp.objective(system)
    viol = transport.admissibility_violation(dp, system)
    weak = viol <= DUALITY_TOL and dual_obj <= bracket.lo + DUALITY_TOL
    gap = abs(bracket.lo - dual_obj)
    SOLVE_LOG.append((type(inst).__name__, weak, gap, cert.certified))
    assert weak, f"weak duality fails: dual {dual_obj!r} > primal {bracket.lo!r} (violation {viol!r})"
    assert gap <= DUALITY_TOL, f"duality gap {gap!r}"
    assert cert.certified, f"solver output not certified: {cert}"
    return bracket, dp


@pytest.fixture(autouse=True)
def _duality_guard(monkeypatch):
    monkeypatch.setattr(transport, "_solve", _checked_solve)


def P(s):
    return Point.parse(s)


@pytest.fixture
def x0x1_cost():
    return SqDistToPoints({"x0": P("|01"), "x1": P("|10")})


@pytest.fixture
def half_half():
    return FiniteMeasure((("x0", 0.5), ("x1", 0.5)))


@pytest.fixture
def contact_cost():
    x0, x1, y0, y1, y2 = P("|01"), P("|10"), P("|001"), P("|010"), P("|100")
    return MinSumSq(((x0, y0), (x1, y1), (x0, y2), (x1, y2)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
