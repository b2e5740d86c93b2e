"""Limit studies: vanishing and diverging horizons, fractional order to one."""

import numpy as np
import pytest

from nlelast.elasticity import IsoTensor
from nlelast.errors import AdmissibilityError, ConfigError
from nlelast.grid import Field, build_domain
from nlelast.kernels import (
    limit_order,
    make_constant,
    make_fractional,
    make_truncated_fractional,
)
from nlelast.localize import (
    HORIZON_TO_INFINITY,
    HORIZON_TO_ZERO,
    NEUMANN_HORIZON_TO_ZERO,
    S_TO_ONE,
    LimitStudy,
    balanced_bump_load,
    restricted_l2_difference,
    run_horizon_to_infinity,
    run_horizon_to_zero,
    run_neumann_horizon_to_zero,
    run_s_to_one,
    smooth_sine_load,
    study_rows,
)
from nlelast.solve import SolveReport

C1 = IsoTensor(1, 1.0, 0.3)


def zero_load(coords):
    return np.zeros_like(np.atleast_2d(np.asarray(coords, dtype=float)))


def assert_nonincreasing(errors, slack=1.05):
    errors = np.asarray(errors)
    assert np.all(errors[1:] <= slack * errors[:-1])


def reference_gaps(study):
    ref = study.reference_report.energy
    return np.array([abs(r.energy - ref) for r in study.member_reports])


class TestHorizonToZero:
    def run(self, deltas=(0.4, 0.2, 0.1, 0.05)):
        base = make_truncated_fractional(1, 0.5, 1.0)
        return run_horizon_to_zero(base, C1, smooth_sine_load, deltas)

    def test_error_table(self):
        st = self.run()
        assert st.regime == HORIZON_TO_ZERO
        assert_nonincreasing(st.errors)
        assert st.errors[-1] <= 0.25 * st.errors[0]
        # frozen study table
        want = [1.270162e-01, 6.493159e-02, 3.671717e-02, 2.269694e-02]
        assert np.allclose(st.errors, want, rtol=1e-4)

    def test_mass_preserved(self):
        st = self.run(deltas=(0.4, 0.1))
        assert np.all(np.abs(st.diagnostics["kernel_mass"] - 1.0) <= 1e-8)

    def test_energies_approach_reference(self):
        st = self.run()
        assert_nonincreasing(reference_gaps(st))

    def test_zero_load(self):
        base = make_truncated_fractional(1, 0.5, 1.0)
        st = run_horizon_to_zero(base, C1, zero_load, deltas=(0.2, 0.1))
        assert np.all(st.errors == 0.0)

    def test_reference_independent_of_members(self):
        full = self.run()
        part = self.run(deltas=(0.2, 0.05))
        assert full.errors[1] == part.errors[0]
        assert full.errors[3] == part.errors[1]
        assert full.reference_report.energy == part.reference_report.energy

    def test_rejects_wrong_direction(self):
        with pytest.raises(ConfigError):
            self.run(deltas=(0.05, 0.1, 0.2))

    def test_rejects_horizon_without_core(self):
        with pytest.raises(ConfigError):
            self.run(deltas=(0.6, 0.3))

    def test_rejects_non_unit_base(self):
        base = make_truncated_fractional(1, 0.5, 2.0)
        with pytest.raises(ConfigError):
            run_horizon_to_zero(base, C1, smooth_sine_load, deltas=(0.2, 0.1))

    def test_rows(self):
        st = self.run(deltas=(0.2, 0.1))
        rows = study_rows(st)
        assert [r["parameter"] for r in rows] == [0.2, 0.1]
        assert set(rows[0]) == {"parameter", "L2_error", "energy", "iterations"}
        assert rows[0]["L2_error"] == st.errors[0]
        assert rows[1]["iterations"] == st.member_reports[1].iterations


class TestLimitOrder:
    def test_truncated_fractional_recovers_order(self):
        for s in (0.3, 0.5, 0.9):
            k = make_truncated_fractional(1, s, 2.0)
            assert limit_order(k) == pytest.approx(s, abs=1e-9)

    def test_pure_fractional(self):
        assert limit_order(make_fractional(1, 0.7)) == pytest.approx(0.7, abs=1e-12)

    def test_constant_kernel_rejected(self):
        # flat near the origin, so the limit order degenerates to zero
        assert limit_order(make_constant(1, 2.0)) == 0.0
        with pytest.raises(AdmissibilityError):
            run_horizon_to_infinity(make_constant(1, 2.0), C1,
                                    smooth_sine_load, deltas=(1.0, 2.0))


class TestHorizonToInfinity:
    def run(self, deltas=(1.0, 2.0, 4.0, 8.0)):
        base = make_truncated_fractional(1, 0.5, 2.0)
        return run_horizon_to_infinity(base, C1, smooth_sine_load, deltas)

    def test_error_table(self):
        st = self.run()
        assert st.regime == HORIZON_TO_INFINITY
        assert st.diagnostics["limit_order"] == pytest.approx(0.5, abs=1e-9)
        assert_nonincreasing(st.errors)
        want = [6.027507e-04, 1.301224e-04, 2.900418e-05, 4.678393e-06]
        assert np.allclose(st.errors, want, rtol=1e-4)

    def test_truncation_diagnostic(self):
        st = self.run(deltas=(1.0, 2.0))
        gap = st.diagnostics["truncation_gap"]
        assert 0.0 < gap < st.errors[0]
        rows = study_rows(st)
        assert all(r["truncation_gap"] == gap for r in rows)

    def test_energies_approach_reference(self):
        st = self.run()
        assert_nonincreasing(reference_gaps(st))

    def test_rejects_wrong_direction(self):
        with pytest.raises(ConfigError):
            self.run(deltas=(4.0, 2.0))


class TestSToOne:
    def test_error_table(self):
        st = run_s_to_one(C1, smooth_sine_load)
        assert st.regime == S_TO_ONE
        assert_nonincreasing(st.errors)
        want = [1.427796e-01, 1.385793e-01, 1.343595e-01,
                1.300824e-01, 1.279132e-01]
        assert np.allclose(st.errors, want, rtol=1e-4)
        assert_nonincreasing(reference_gaps(st))

    def test_zero_load(self):
        st = run_s_to_one(C1, zero_load, s_values=(0.7, 0.9))
        assert np.all(st.errors == 0.0)

    def test_rejects_bad_orders(self):
        with pytest.raises(ConfigError):
            run_s_to_one(C1, smooth_sine_load, s_values=(0.9, 0.7))
        with pytest.raises(ConfigError):
            run_s_to_one(C1, smooth_sine_load, s_values=(0.9, 1.2))


class TestNeumannHorizonToZero:
    def test_error_table(self):
        st = run_neumann_horizon_to_zero(C1, balanced_bump_load)
        assert st.regime == NEUMANN_HORIZON_TO_ZERO
        assert_nonincreasing(st.errors)
        want = [9.736453e-04, 4.413826e-04, 1.197656e-04]
        assert np.allclose(st.errors, want, rtol=1e-4)
        assert np.all(st.diagnostics["compatibility_defect"] < 1e-4)
        assert_nonincreasing(reference_gaps(st))

    def test_zero_load(self):
        st = run_neumann_horizon_to_zero(C1, zero_load, deltas=(0.2, 0.1))
        assert np.all(st.errors == 0.0)

    def test_rejects_load_outside_core(self):
        # 10 sin(pi x) is nonzero on the retracted-core complement
        with pytest.raises(AdmissibilityError):
            run_neumann_horizon_to_zero(C1, smooth_sine_load, deltas=(0.3, 0.2))


class TestComparisonMachinery:
    def test_zero_mean_gauge_kills_constants(self):
        dom = build_domain([(0.0, 1.0)], 0.1, 1.0 / 20)
        rng = np.random.default_rng(3)
        a = Field(dom, rng.standard_normal((dom.nnodes, 1)))
        b = Field(dom, rng.standard_normal((dom.nnodes, 1)))
        d0 = restricted_l2_difference(a, b, [0.0], [1.0], zero_mean=True)
        shifted = Field(dom, b.values + 3.7)
        d1 = restricted_l2_difference(a, shifted, [0.0], [1.0], zero_mean=True)
        assert d1 == pytest.approx(d0, abs=1e-12)

    def test_rejects_unnested_lattices(self):
        da = build_domain([(0.0, 1.0)], 0.1, 1.0 / 20)
        db = build_domain([(0.0, 1.0)], 0.125, 1.0 / 24)
        a = Field(da, np.zeros((da.nnodes, 1)))
        b = Field(db, np.zeros((db.nnodes, 1)))
        with pytest.raises(ConfigError):
            restricted_l2_difference(a, b, [0.0], [1.0])

    def test_study_validation(self):
        rep = SolveReport(True, 0, 0.0, 0.0, 1)
        with pytest.raises(ConfigError):
            LimitStudy("no_such_regime", [0.2, 0.1], [rep, rep], rep,
                       [0.0, 0.0])
        with pytest.raises(ConfigError):
            LimitStudy(HORIZON_TO_ZERO, [0.2, 0.1], [rep], rep, [0.0])
        with pytest.raises(ConfigError):
            LimitStudy(HORIZON_TO_ZERO, [0.1, 0.2], [rep, rep], rep,
                       [0.0, 0.0])
