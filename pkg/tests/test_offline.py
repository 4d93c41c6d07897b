import math

import numpy as np
import pytest
from scipy.optimize import linprog

from drboost.geometry import BallProduct, BoxConstraint, CardinalityPolytope, PackingPolytope
from drboost.objectives import (CoverageMonotone, CoverageNonMonotone, LinearObjective,
                                QuadraticObjective, ZeroObjective, make_monotone_quadratic)
from drboost.offline import (OfflineConfig, SolverConfigError, boosting_gradient_ascent,
                             continuous_greedy_fw, lmo, measured_fw, sga_baseline,
                             guarantee_step_schedule, write_trace_csv)


class TestConfig:
    def test_rejects_short_horizon(self):
        with pytest.raises(SolverConfigError):
            OfflineConfig(T=1)

    def test_rejects_unknown_option(self):
        with pytest.raises(SolverConfigError):
            OfflineConfig(option="III")

    def test_rejects_infeasible_start(self):
        f = LinearObjective(np.ones(2))
        with pytest.raises(SolverConfigError):
            boosting_gradient_ascent(f, BoxConstraint.unit(2), OfflineConfig(T=5, start=np.array([2.0, 0.0])))

    def test_option_one_needs_monotone(self):
        f = CoverageNonMonotone(2)
        with pytest.raises(SolverConfigError):
            boosting_gradient_ascent(f, BoxConstraint.unit(5), OfflineConfig(T=5, option="I"))


class TestBoostingAscent:
    def test_two_rounds_take_one_step(self):
        f = LinearObjective(np.ones(3))
        tr = boosting_gradient_ascent(f, BoxConstraint.unit(3), OfflineConfig(T=2, step=0.1))
        assert tr.selected_index == 1
        np.testing.assert_array_equal(tr.output, np.zeros(3))
        assert tr.step_sizes[0] == 0.1 and tr.step_sizes[1] == 0.0
        np.testing.assert_allclose(tr.iterates[1], 0.1 * (1 - math.exp(-1)))

    def test_noiseless_values_nondecreasing(self):
        # grad f = 1 - x >= 0 on the box, so every boosted step moves up componentwise
        f = QuadraticObjective(-np.eye(3), np.ones(3))
        tr = boosting_gradient_ascent(f, BoxConstraint.unit(3), OfflineConfig(T=100, step=0.05, seed=3))
        assert np.all(np.diff(tr.values[10:]) >= -1e-12)
        assert tr.final_value > 1.4

    def test_iterates_feasible_on_packing(self):
        rng = np.random.default_rng(0)
        f = make_monotone_quadratic(10, rng, noise=5.0)
        C = PackingPolytope.random(10, 2, rng)
        tr = boosting_gradient_ascent(f, C, OfflineConfig(T=60, batch=5, seed=1))
        assert tr.feasible.all()
        assert tr.output_value(f) == pytest.approx(tr.values[tr.selected_index - 1])

    def test_option_two_reports_midpoint_values(self):
        f = CoverageNonMonotone(3)
        C = BoxConstraint.unit(7)
        tr = boosting_gradient_ascent(f, C, OfflineConfig(T=20, option="II", step=0.1, start=f.stationary_point()))
        assert tr.values[0] == pytest.approx(f.value(0.5 * f.stationary_point()))

    def test_seeded_runs_repeat(self):
        f = CoverageMonotone(3, noise=0.1)
        C = CardinalityPolytope(3, dim=7)
        a = boosting_gradient_ascent(f, C, OfflineConfig(T=30, batch=2, seed=5))
        b = boosting_gradient_ascent(f, C, OfflineConfig(T=30, batch=2, seed=5))
        np.testing.assert_array_equal(a.iterates, b.iterates)
        assert a.selected_index == b.selected_index

    def test_escapes_local_max_single_seed(self):
        k = 10
        f = CoverageMonotone(k, noise=0.01)
        C = CardinalityPolytope(k, dim=2 * k + 1)
        tr = boosting_gradient_ascent(f, C, OfflineConfig(T=200, batch=5, seed=0, start=f.local_max()))
        assert tr.final_value >= 0.9 * (1 - 1 / math.e) * (2 * k + 1)

    def test_guarantee_step_option_two(self):
        f = CoverageNonMonotone(2)
        eta = guarantee_step_schedule(f, BoxConstraint.unit(5), "II")
        assert eta(4) == pytest.approx(1 / (f.L * 2))

    def test_csv(self, tmp_path):
        f = LinearObjective(np.ones(2))
        tr = boosting_gradient_ascent(f, BoxConstraint.unit(2), OfflineConfig(T=3, step=0.5))
        write_trace_csv(tr, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "t,value,step_size,feasible"
        assert len(lines) == 4


class TestSGA:
    def test_stuck_at_monotone_local_max(self):
        k = 10
        f = CoverageMonotone(k)
        C = CardinalityPolytope(k, dim=2 * k + 1)
        tr = sga_baseline(f, C, OfflineConfig(T=50, start=f.local_max()))
        np.testing.assert_allclose(tr.values, k + 1, atol=1e-9)
        np.testing.assert_allclose(tr.iterates[-1], f.local_max(), atol=1e-9)

    def test_stuck_at_nonmonotone_stationary_point(self):
        k = 10
        f = CoverageNonMonotone(k)
        tr = sga_baseline(f, BoxConstraint.unit(2 * k + 1), OfflineConfig(T=50, start=f.stationary_point()))
        np.testing.assert_allclose(tr.values, 1.0, atol=1e-12)

    def test_zero_objective_constant(self):
        f = ZeroObjective(4)
        start = np.full(4, 0.3)
        tr = sga_baseline(f, BoxConstraint.unit(4), OfflineConfig(T=10, start=start))
        np.testing.assert_array_equal(tr.iterates, np.tile(start, (10, 1)))


class TestLMO:
    def test_box(self):
        np.testing.assert_array_equal(lmo(BoxConstraint.unit(3), [1.0, -1.0, 0.0]), [1.0, 0.0, 0.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_cardinality_matches_linprog(self, seed):
        rng = np.random.default_rng(seed)
        C = CardinalityPolytope(rng.uniform(0.5, 3.0), rng.uniform(0.2, 1.5, 6))
        g = rng.normal(size=6)
        ref = linprog(-g, A_ub=np.ones((1, 6)), b_ub=[C.k], bounds=list(zip(np.zeros(6), C.upper)))
        assert g @ lmo(C, g) == pytest.approx(-ref.fun, abs=1e-9)

    def test_packing_beats_samples(self):
        rng = np.random.default_rng(1)
        C = PackingPolytope.random(6, 3, rng)
        g = rng.normal(size=6)
        v = lmo(C, g)
        assert C.contains(v)
        assert all(g @ v >= g @ C.sample(rng) - 1e-9 for _ in range(300))

    def test_ball_product(self):
        B = BallProduct([[0.0, 0.0]], 2.0)
        np.testing.assert_allclose(lmo(B, [3.0, 4.0]), [1.2, 1.6])


class TestFrankWolfe:
    def test_linear_box_reaches_corner(self):
        f = LinearObjective(np.array([1.0, 2.0, 0.5]))
        np.testing.assert_allclose(continuous_greedy_fw(f, BoxConstraint.unit(3), 20), np.ones(3))

    def test_single_step_is_vertex(self):
        f = LinearObjective(np.array([1.0, 2.0, 0.5]))
        C = CardinalityPolytope(1, dim=3)
        np.testing.assert_allclose(continuous_greedy_fw(f, C, 1), [0.0, 1.0, 0.0])

    def test_coverage_comparator_quality(self):
        k = 10
        f = CoverageMonotone(k)
        x = continuous_greedy_fw(f, CardinalityPolytope(k, dim=2 * k + 1), 500)
        assert f.value(x) >= (1 - 1 / math.e) * (2 * k + 1) - 0.05 * (2 * k + 1)

    def test_path_recorded(self):
        path = []
        continuous_greedy_fw(LinearObjective(np.ones(2)), BoxConstraint.unit(2), 4, path)
        assert len(path) == 4

    def test_measured_linear_feasible(self):
        f = LinearObjective(np.array([1.0, -1.0, 2.0]))
        C = PackingPolytope.random(3, 2, np.random.default_rng(0))
        assert C.contains(measured_fw(f, C, 30))

    def test_measured_single_step_below_vertex(self):
        f = CoverageNonMonotone(3)
        C = BoxConstraint.unit(7)
        x = measured_fw(f, C, 1)
        assert np.all(x <= lmo(C, f.grad(np.zeros(7))) + 1e-12)

    def test_measured_vs_boosted_on_gk(self):
        k = 10
        f = CoverageNonMonotone(k)
        C = BoxConstraint.unit(2 * k + 1)
        mfw = f.value(measured_fw(f, C, 500))
        outs = [boosting_gradient_ascent(f, C, OfflineConfig(T=200, option="II", seed=s,
                                                             start=f.stationary_point())).output
                for s in range(3)]
        bga = np.mean([f.value(o) for o in outs])
        assert mfw >= 0.95 * bga

    def test_measured_needs_down_closed(self):
        with pytest.raises(Exception):
            measured_fw(LinearObjective(np.ones(2)), BoxConstraint(np.full(2, 0.1), np.ones(2)), 5)
