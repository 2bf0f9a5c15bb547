import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergotransport.cost import Affine, PairSqDist, SqDistToPoints, TableCost, constant_cost
from ergotransport.errors import NonConvergence
from ergotransport.lp import TransportPlan, lp_solve
from ergotransport.measures import CylinderMeasure, FiniteMeasure, flow_balance
from ergotransport.shift import Cylinder, canonical_orbit
from ergotransport.transport import (
    DualPair, P1Instance, P2Instance, _build, admissibility_violation, assemble_p1, assemble_p2,
    birkhoff_deficiency_scan, certify_slackness, eo_min, invariant_core, lax_oleinik_refine,
    lipschitz_excess, min_cycle_mean, orbit_average, oscillation_bound, plan_marginals, solve_p1,
    solve_p2,
)

from conftest import P


def C(text):
    return Cylinder.parse(text)


def example_p1(x0x1_cost, half_half, k):
    return P1Instance(half_half, x0x1_cost, k)


def dirac_instance(k):
    return P1Instance(FiniteMeasure.dirac("x0"), SqDistToPoints({"x0": P("|01")}), k)


def random_table_instance(seed, k=4):
    rng = np.random.default_rng(seed)
    cost = TableCost(rng.random((2, 2 ** k)), ky=k, x_labels=("a", "b"))
    w = rng.random(2) + 0.1
    return P1Instance(FiniteMeasure((("a", w[0] / w.sum()), ("b", 1 - w[0] / w.sum()))), cost, k)


class TestAssembly:
    def test_p1_counts(self, x0x1_cost, half_half):
        p = assemble_p1(example_p1(x0x1_cost, half_half, 2))
        assert p.A.shape == (2 + 2, 8)

    def test_p2_counts(self, contact_cost):
        p = assemble_p2(P2Instance(contact_cost, 3, 4))
        assert p.A.shape == (4 + 8 + 1, 8 * 16)

    def test_dirac_row_forces_zero(self, x0x1_cost):
        inst = P1Instance(FiniteMeasure.dirac("x0"), x0x1_cost, 3)
        vb, _ = solve_p1(inst)
        assert all(u == "x0" for u, _, _ in vb.plan_lo.atoms)

    def test_lo_value_of_example(self, x0x1_cost, half_half):
        s = lp_solve(assemble_p1(example_p1(x0x1_cost, half_half, 4)))
        assert s.value == pytest.approx(0.0, abs=1e-12)

    def test_depth_validation(self, x0x1_cost, half_half):
        with pytest.raises(ValueError):
            P1Instance(half_half, x0x1_cost, 1)
        with pytest.raises(ValueError):
            P2Instance(PairSqDist(), 1, 3)
        with pytest.raises(ValueError):
            _build(P1Instance(half_half, x0x1_cost, 3)).problem("mid")


class TestSolveP1:
    def test_example(self, x0x1_cost, half_half):
        vb, dp = solve_p1(example_p1(x0x1_cost, half_half, 4))
        assert vb.lo == pytest.approx(0.0, abs=1e-9)
        assert vb.hi <= 2.0 ** -8 + 1e-9
        assert vb.plan_lo.atoms == [("x0", C("0101"), 0.5), ("x1", C("1010"), 0.5)]

    @pytest.mark.parametrize("k", [2, 3, 4, 6])
    def test_dirac_reduction(self, k):
        vb, _ = solve_p1(dirac_instance(k))
        assert vb.lo == pytest.approx(0.25, abs=1e-9)
        assert vb.hi == pytest.approx(0.25, abs=1e-9)
        assert vb.plan_lo.atoms == [("x0", Cylinder.from_index(0, k), 1.0)]

    def test_constant_cost(self, half_half):
        inst = P1Instance(half_half, TableCost(np.ones((2, 2)), ky=1, x_labels=("x0", "x1")), 3)
        vb, _ = solve_p1(inst)
        assert vb.lo == pytest.approx(1.0, abs=1e-12) and vb.hi == pytest.approx(1.0, abs=1e-12)

    def test_cylinder_mu(self):
        mu = CylinderMeasure.uniform(3)
        vb, _ = solve_p1(P1Instance(mu, PairSqDist(), 3))
        assert vb.lo <= vb.hi
        xm, ym = plan_marginals(vb.plan_lo, vb.system)
        assert np.abs(xm - mu.masses).max() <= 1e-12

    @pytest.mark.parametrize("k", [3, 4, 5])
    def test_dirac_matches_ergodic_optimisation(self, k):
        vb, _ = solve_p1(dirac_instance(k))
        value, _ = eo_min(SqDistToPoints({"x0": P("|01")}), 8)
        assert abs(vb.lo - value) <= 2 * 2.0 * 0.5 ** (k - 1)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(2, 5))
    def test_marginals(self, seed, k):
        inst = random_table_instance(seed, k)
        vb, _ = solve_p1(inst)
        for plan in (vb.plan_lo, vb.plan_hi):
            xm, ym = plan_marginals(plan, vb.system)
            assert np.abs(xm - inst.mu.masses).max() <= 1e-12
            assert np.abs(flow_balance(ym, k, 2)).max() <= 1e-9
        assert vb.lo <= vb.hi


class TestSolveP2:
    def test_contact_example(self, contact_cost):
        vb, _ = solve_p2(P2Instance(contact_cost, 6, 6))
        assert vb.lo == pytest.approx(0.0, abs=1e-9)
        got = {(str(u), str(v)): m for u, v, m in vb.plan_lo.atoms}
        want = {("[010101]", "[001001]"): 1 / 3, ("[101010]", "[010010]"): 1 / 3,
                ("[010101]", "[100100]"): 1 / 6, ("[101010]", "[100100]"): 1 / 6}
        assert got.keys() == want.keys()
        assert all(abs(got[k] - want[k]) <= 1e-6 for k in want)

    def test_pair_distance(self):
        k = 4
        vb, _ = solve_p2(P2Instance(PairSqDist(), k, k))
        assert vb.lo == pytest.approx(0.0, abs=1e-12)
        # points of one depth-k cylinder can still differ at index k
        assert vb.hi <= 0.5 ** (2 * k) + 1e-12
        assert all(u == v for u, v, _ in vb.plan_lo.atoms)

    def test_constant_five(self):
        vb, dp = solve_p2(P2Instance(constant_cost(5.0), 3, 3))
        assert vb.lo == pytest.approx(5.0, abs=1e-9)
        assert dp.alpha == pytest.approx(5.0, abs=1e-9)
        zero = DualPair(np.zeros(4), np.zeros(4), 5.0, "p2")
        assert admissibility_violation(zero, vb.system) <= 1e-12
        assert certify_slackness(vb.plan_lo, zero, vb.system).certified

    @pytest.mark.parametrize("k", [3, 4])
    def test_marginals(self, contact_cost, k):
        vb, _ = solve_p2(P2Instance(contact_cost, k, k + 1))
        xm, ym = plan_marginals(vb.plan_lo, vb.system)
        assert np.abs(flow_balance(xm, k, 2)).max() <= 1e-9
        assert np.abs(flow_balance(ym, k + 1, 2)).max() <= 1e-9
        assert xm.sum() == pytest.approx(1.0, abs=1e-12)


class TestCertificate:
    def test_zero_pair_certifies_example(self, x0x1_cost, half_half):
        vb, _ = solve_p1(example_p1(x0x1_cost, half_half, 4))
        cert = certify_slackness(vb.plan_lo, DualPair(np.zeros(2), np.zeros(8)), vb.system)
        assert cert.certified and cert.duality_gap == 0.0

    def test_shifted_psi_breaks_admissibility(self, x0x1_cost, half_half):
        vb, _ = solve_p1(example_p1(x0x1_cost, half_half, 4))
        psi = np.zeros(8)
        psi[3] += 1.0
        cert = certify_slackness(vb.plan_lo, DualPair(np.zeros(2), psi), vb.system)
        assert not cert.certified
        # every edge into node 011 gains 1; the cheapest costs 2**-6
        assert cert.max_admissibility_violation == pytest.approx(1.0 - 2.0 ** -6)

    def test_suboptimal_plan(self, x0x1_cost, half_half):
        vb, dp = solve_p1(example_p1(x0x1_cost, half_half, 4))
        bad = TransportPlan([("x0", C("1010"), 0.5), ("x1", C("0101"), 0.5)], float("nan"))
        cert = certify_slackness(bad, dp, vb.system)
        assert cert.status == "gap-reported"
        assert cert.max_support_slack > 0.1 and cert.max_admissibility_violation <= 1e-9

    def test_mode_and_shape_checks(self, x0x1_cost, half_half):
        vb, _ = solve_p1(example_p1(x0x1_cost, half_half, 3))
        with pytest.raises(ValueError):
            certify_slackness(vb.plan_lo, DualPair(np.zeros(2), np.zeros(4), 0.0, "p2"), vb.system)
        with pytest.raises(ValueError):
            certify_slackness(vb.plan_lo, DualPair(np.zeros(2), np.zeros(3)), vb.system)

    def test_dual_dict_roundtrip(self, contact_cost):
        vb, dp = solve_p2(P2Instance(contact_cost, 3, 4))
        back = DualPair.from_dict(dp.as_dict(vb.system), vb.system)
        assert np.array_equal(back.phi, dp.phi) and np.array_equal(back.psi, dp.psi)
        assert back.alpha == dp.alpha and back.mode == "p2"
        with pytest.raises(ValueError):
            DualPair.from_dict({"phi": {}, "psi": {}}, vb.system)


class TestLaxOleinik:
    def test_constant_cost(self):
        inst = P1Instance(FiniteMeasure.dirac("x"), TableCost(np.full((1, 2), 3.0), ky=1, x_labels=("x",)), 4)
        dp, info = lax_oleinik_refine(inst, DualPair(np.zeros(1), np.zeros(8)))
        assert dp.phi.tolist() == [3.0] and np.all(dp.psi == 0.0)

    def test_example_zero_pair_is_fixed(self, x0x1_cost, half_half):
        inst = example_p1(x0x1_cost, half_half, 4)
        dp, info = lax_oleinik_refine(inst, DualPair(np.zeros(2), np.zeros(8)))
        assert np.all(dp.phi == 0.0) and np.all(dp.psi == 0.0)
        assert info.iterations == 1

    @pytest.mark.parametrize("seed_kind", ["zero", "lp"])
    def test_dirac_subaction(self, seed_kind):
        inst = dirac_instance(4)
        if seed_kind == "zero":
            seed = DualPair(np.zeros(1), np.zeros(8))
        else:
            seed = solve_p1(inst)[1]
        dp, _ = lax_oleinik_refine(inst, seed)
        assert dp.phi[0] == pytest.approx(0.25, abs=1e-12)
        system = _build(inst)
        assert admissibility_violation(dp, system) <= 1e-9
        assert lipschitz_excess(dp.psi, 3, 2, 2.0) <= 1e-12
        assert dp.psi.min() == 0.0

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_random_tables(self, seed):
        inst = random_table_instance(seed)
        vb, lp_dual = solve_p1(inst)
        dp, info = lax_oleinik_refine(inst, lp_dual)
        system = vb.system
        assert admissibility_violation(dp, system) <= 1e-9
        assert np.all(dp.phi >= lp_dual.phi - 1e-9)
        assert dp.objective(system) >= lp_dual.objective(system) - 1e-9
        assert lipschitz_excess(dp.psi, 3, 2, inst.cost.lipschitz()) <= 1e-9
        assert info.residual <= 1e-10

    def test_p2(self, contact_cost):
        inst = P2Instance(contact_cost, 4, 4)
        vb, lp_dual = solve_p2(inst)
        dp, info = lax_oleinik_refine(inst, lp_dual)
        assert admissibility_violation(dp, vb.system) <= 1e-9
        assert dp.alpha >= lp_dual.alpha - 1e-9

    def test_iteration_cap(self):
        inst = dirac_instance(4)
        with pytest.raises(NonConvergence):
            lax_oleinik_refine(inst, DualPair(np.zeros(1), np.zeros(8)), max_iters=1)

    def test_non_finite_seed(self):
        with pytest.raises(ValueError):
            lax_oleinik_refine(dirac_instance(3), DualPair(np.array([np.nan]), np.zeros(4)))


class TestMinCycleMean:
    @pytest.mark.parametrize("seed", range(5))
    def test_against_orbits(self, seed):
        from ergotransport.shift import enumerate_fix
        w = np.random.default_rng(seed).normal(size=16)
        # a simple cycle on 8 nodes has length <= 8; cycles are periodic words
        best = min(np.mean([w[int("".join(map(str, (o.primitive_word.symbols * 8)[i:i + 4])), 2)]
                            for i in range(o.period)])
                   for n in range(1, 9) for o in enumerate_fix(n, exact=True))
        assert min_cycle_mean(w, 2) == pytest.approx(best, abs=1e-12)


class TestErgodicOptimisation:
    def test_examples(self):
        value, orbit = eo_min(SqDistToPoints({"x0": P("|01")}), 6)
        assert value == 0.25 and str(orbit.primitive_word) == "0"
        assert eo_min(constant_cost(3.0), 4)[0] == 3.0
        value, orbit = eo_min(SqDistToPoints({"x0": P("|0")}), 5)
        assert value == 0.0 and str(orbit.primitive_word) == "0"

    def test_orbit_averages(self):
        A = SqDistToPoints({"x0": P("|01")})
        assert orbit_average(A, canonical_orbit("1"), "x0") == 1.0
        assert orbit_average(A, canonical_orbit("01"), "x0") == 0.5

    def test_brute_force(self):
        A = SqDistToPoints({"x0": P("|011")})
        from ergotransport.shift import enumerate_fix
        ref = min(orbit_average(A, o, "x0") for n in range(1, 7) for o in enumerate_fix(n))
        assert eo_min(A, 6)[0] == ref

    def test_rejects_x_dependent_costs(self, x0x1_cost):
        with pytest.raises(ValueError):
            eo_min(x0x1_cost, 3)
        with pytest.raises(ValueError):
            eo_min(PairSqDist(), 3)


class TestBirkhoff:
    samples = [(P("|01"), P("|001")), (P("0|1"), P("|10")), (P("|0"), P("11|0"))]

    def test_constant_at_alpha(self):
        assert birkhoff_deficiency_scan(constant_cost(2.0), 2.0, 10, self.samples) == 0.0

    def test_nonnegative_cost(self, contact_cost):
        assert birkhoff_deficiency_scan(contact_cost, 0.0, 12, self.samples) >= 0.0

    def test_linear_divergence(self):
        # n terms of (1 - 2): the deficiency after n steps is -n
        for horizon in (1, 5, 25):
            assert birkhoff_deficiency_scan(constant_cost(1.0), 2.0, horizon, self.samples) == -horizon

    def test_oscillation_bound(self, contact_cost):
        inst = P2Instance(contact_cost, 3, 3)
        vb, dp = solve_p2(inst)
        scan = birkhoff_deficiency_scan(contact_cost, vb.lo, 8, self.samples)
        assert scan >= -oscillation_bound(dp) - 1e-9


class TestInvariantCore:
    def test_contact_plan_has_empty_core(self, contact_cost):
        vb, _ = solve_p2(P2Instance(contact_cost, 5, 5))
        assert invariant_core(vb.plan_lo) == []

    def test_diagonal_periodic_plan_is_closed(self):
        atoms = [(C("01"), C("01"), 0.5), (C("10"), C("10"), 0.5)]
        plan = TransportPlan(atoms, 0.0)
        assert invariant_core(plan) == [(C("01"), C("01")), (C("10"), C("10"))]
