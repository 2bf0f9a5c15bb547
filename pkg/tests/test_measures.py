import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergotransport.measures import (
    CylinderMeasure, FiniteMeasure, StationarityConstraints, flow_balance, markov_extend,
    markov_extension_mass, orbit_measure, project_to_depth, stationarity_residual,
)
from ergotransport.shift import Point, Word, canonical_orbit, enumerate_fix


def orbit_mixture(weights, k):
    """Stationary depth-k table: a convex mix of orbit measures of period <= 4."""
    orbits = enumerate_fix(4)
    w = np.asarray(weights[: len(orbits)], dtype=float)
    w = w / w.sum()
    masses = sum(wi * project_to_depth(orbit_measure(o), k).masses for wi, o in zip(w, orbits))
    return CylinderMeasure(k, masses / masses.sum())


weights = st.lists(st.floats(0.01, 1.0), min_size=6, max_size=6)


class TestFiniteMeasure:
    def test_orbit_measures(self):
        m0 = orbit_measure(canonical_orbit("0"))
        assert m0.atoms == ((Point.parse("|0"), 1.0),)
        m01 = orbit_measure(canonical_orbit("01"))
        assert dict(m01.atoms) == {Point.parse("|01"): 0.5, Point.parse("|10"): 0.5}
        m001 = orbit_measure(canonical_orbit("001"))
        assert len(m001) == 3 and np.allclose(m001.masses, 1 / 3)

    def test_validation(self):
        with pytest.raises(ValueError):
            FiniteMeasure((("a", 0.9),))
        with pytest.raises(ValueError):
            FiniteMeasure((("a", 1.5), ("b", -0.5)))
        with pytest.raises(ValueError):
            FiniteMeasure(())

    def test_csv_roundtrip(self):
        m = FiniteMeasure(((Point.parse("0|1"), 0.25), ("label", 0.75)))
        assert FiniteMeasure.from_csv(m.to_csv()) == m
        assert m.to_csv().splitlines()[0] == "point,mass"


class TestCylinderMeasure:
    def test_projection_examples(self):
        m = project_to_depth(orbit_measure(canonical_orbit("01")), 2)
        assert m.mass("01") == 0.5 and m.mass("10") == 0.5
        assert m.mass("00") == 0.0 and m.mass("11") == 0.0
        u = project_to_depth(CylinderMeasure.uniform(5), 3)
        assert np.allclose(u.masses, 1 / 8)
        dirac = project_to_depth(FiniteMeasure.dirac(Point.parse("|0")), 4)
        assert dirac.mass("0000") == 1.0

    def test_projection_errors(self):
        with pytest.raises(ValueError):
            project_to_depth(CylinderMeasure.uniform(2), 3)
        with pytest.raises(ValueError):
            project_to_depth(FiniteMeasure.dirac("x0"), 2)

    def test_consistency_under_reduction(self):
        m = orbit_mixture([1, 2, 3, 4, 5, 6], 5)
        for cyl, mass in project_to_depth(m, 3).items():
            assert mass == pytest.approx(m.mass(cyl))
            kids = [m.mass(f"{cyl.word}{a}") for a in "01"]
            assert mass == pytest.approx(sum(kids))

    def test_csv_roundtrip(self):
        m = orbit_mixture([1, 1, 2, 3, 5, 8], 3)
        back = CylinderMeasure.from_csv(m.to_csv())
        assert back.depth == 3 and np.array_equal(back.masses, m.masses)

    def test_bad_shape_and_sum(self):
        with pytest.raises(ValueError):
            CylinderMeasure(2, np.full(3, 1 / 3))
        with pytest.raises(ValueError):
            CylinderMeasure(1, np.array([0.5, 0.4]))

    def test_masses_are_frozen(self):
        m = CylinderMeasure.uniform(2)
        with pytest.raises(ValueError):
            m.masses[0] = 1.0


class TestStationarity:
    def test_examples(self):
        assert stationarity_residual(project_to_depth(orbit_measure(canonical_orbit("01")), 2)) == 0
        assert stationarity_residual(CylinderMeasure.uniform(3)) == 0
        assert stationarity_residual(CylinderMeasure.from_dict({"01": 1.0, "00": 0.0, "10": 0.0, "11": 0.0})) == 1

    def test_depth_one_rejected(self):
        with pytest.raises(ValueError):
            stationarity_residual(CylinderMeasure.uniform(1))

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_constraint_matrix(self, k):
        M = StationarityConstraints(k).matrix()
        assert M.shape == (2 ** (k - 1), 2 ** k)
        assert np.all(M.sum(axis=1) == 0)
        x = np.random.default_rng(k).random(2 ** k)
        assert np.allclose(M @ x, flow_balance(x, k, 2))

    @pytest.mark.parametrize("n", range(1, 8))
    def test_orbit_projections_are_stationary(self, n):
        for o in enumerate_fix(n):
            for k in range(2, 7):
                assert stationarity_residual(project_to_depth(orbit_measure(o), k)) <= 1e-12

    def test_ternary(self):
        o = canonical_orbit(Word.parse("0212", 3))
        m = project_to_depth(orbit_measure(o), 3)
        assert m.d == 3 and stationarity_residual(m) <= 1e-12


class TestMarkovExtension:
    def test_examples(self):
        m01 = project_to_depth(orbit_measure(canonical_orbit("01")), 2)
        assert markov_extension_mass(m01, "0101") == 0.5
        assert markov_extension_mass(CylinderMeasure.uniform(2), "000") == pytest.approx(1 / 8)
        d00 = CylinderMeasure.from_dict({"00": 1.0, "01": 0.0, "10": 0.0, "11": 0.0})
        assert markov_extension_mass(d00, "000") == 1.0

    def test_dead_branch_is_zero(self):
        d00 = CylinderMeasure.from_dict({"00": 1.0, "01": 0.0, "10": 0.0, "11": 0.0})
        assert markov_extension_mass(d00, "110") == 0.0

    def test_requires_stationary(self):
        bad = CylinderMeasure.from_dict({"01": 1.0, "00": 0.0, "10": 0.0, "11": 0.0})
        with pytest.raises(ValueError):
            markov_extension_mass(bad, "010")
        with pytest.raises(ValueError):
            markov_extend(bad, 4)

    def test_word_must_be_longer(self):
        with pytest.raises(ValueError):
            markov_extension_mass(CylinderMeasure.uniform(2), "01")

    @settings(max_examples=40, deadline=None)
    @given(weights, st.integers(2, 4), st.integers(1, 3))
    def test_extension_is_stationary_and_projects_back(self, w, k, extra):
        m = orbit_mixture(w, k)
        ext = markov_extend(m, k + extra)
        assert stationarity_residual(ext) <= 1e-12
        assert np.allclose(project_to_depth(ext, k).masses, m.masses, atol=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(weights, st.integers(2, 3))
    def test_mass_matches_extension_table(self, w, k):
        m = orbit_mixture(w, k)
        ext = markov_extend(m, k + 2)
        for cyl, mass in ext.items():
            assert markov_extension_mass(m, cyl.word) == pytest.approx(mass, abs=1e-14)
