import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from drboost.geometry import CardinalityPolytope, PackingPolytope

from drboost.objectives import (CoverageMonotone, CoverageNonMonotone, FacilityLocation,
                                GaussianNoise, LinearObjective, ModularFunction, MultilinearExtension,
                                ObjectiveError, QuadraticObjective, RegularizedSetFunction,
                                ShiftedObjective, average_objective, ensure_zero_at_origin,
                                facility_location_setfn, fk_value, gk_value, load_ratings_csv,
                                make_monotone_quadratic, make_nonmonotone_quadratic,
                                multilinear_grad_exact, multilinear_grad_sampled,
                                multilinear_value_exact, regularized_setfn, submodularity_violations,
                                synthetic_ratings, to_mask)


def fd_grad(f, x, h=1e-6):
    return np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(len(x))])


def brute_multilinear(f, x):
    """Sum over all subsets, written independently of the library's mask tables."""
    n = len(x)
    total = 0.0
    for bits in itertools.product([0, 1], repeat=n):
        m = np.array(bits, dtype=bool)
        total += f.eval(m) * np.prod(np.where(m, x, 1 - x))
    return total


class TestCoverage:
    def test_fk_worked_examples(self):
        k = 25
        x_loc = np.r_[np.ones(k), np.zeros(k + 1)]
        x_star = np.r_[np.zeros(k), np.ones(k + 1)]
        assert fk_value(k, x_loc) == pytest.approx(26)
        assert fk_value(k, x_star) == pytest.approx(51)
        assert fk_value(k, np.zeros(2 * k + 1)) == pytest.approx(0)

    def test_gk_worked_examples(self):
        k = 25
        assert gk_value(k, np.r_[np.ones(2 * k), 0.0]) == pytest.approx(1)
        assert gk_value(k, np.r_[np.zeros(2 * k), 1.0]) == pytest.approx(25)
        assert gk_value(k, np.zeros(2 * k + 1)) == pytest.approx(0)

    @pytest.mark.parametrize("cls", [CoverageMonotone, CoverageNonMonotone])
    def test_gradient_matches_finite_differences(self, cls):
        f = cls(5)
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.random(f.dim)
            np.testing.assert_allclose(f.grad(x), fd_grad(f.value, x), atol=1e-6)

    def test_fk_local_max_is_stationary_on_budget(self):
        # no feasible direction under sum(x) <= k improves the first-order model
        f = CoverageMonotone(6)
        x = f.local_max()
        g = f.grad(x)
        C = CardinalityPolytope(6, dim=f.dim)
        rng = np.random.default_rng(0)
        for _ in range(200):
            assert g @ (C.sample(rng) - x) <= 1e-12

    def test_gk_stationary_point(self):
        f = CoverageNonMonotone(6)
        x = f.stationary_point()
        g = f.grad(x)
        np.testing.assert_allclose(g[:12], 0.0, atol=1e-12)
        assert g[12] == pytest.approx(-1.0)
        rng = np.random.default_rng(1)
        for _ in range(200):
            assert g @ (rng.random(f.dim) - x) <= 1e-12

    @pytest.mark.parametrize("cls", [CoverageMonotone, CoverageNonMonotone])
    def test_nonnegative_and_dr_submodular(self, cls):
        f = cls(4)
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.random(f.dim)
            assert f.value(x) >= -1e-12
            y = np.maximum(x, rng.random(f.dim))
            assert np.all(f.grad(y) <= f.grad(x) + 1e-9)

    def test_monotone_coverage_gradient_nonnegative(self):
        f = CoverageMonotone(4)
        rng = np.random.default_rng(2)
        for _ in range(50):
            assert np.all(f.grad(rng.random(f.dim)) >= -1e-12)

    def test_smoothness_constant_bounds_hessian(self):
        f = CoverageMonotone(4)
        rng = np.random.default_rng(3)
        x = rng.random(f.dim)
        Hs = np.array([fd_grad(lambda z, i=i: f.grad(z)[i], x) for i in range(f.dim)])
        assert np.linalg.norm(Hs) <= f.L + 1e-6


class TestQuadratic:
    def test_hand_example(self):
        H = -np.eye(2)
        f = QuadraticObjective(H, -H.T @ np.ones(2))
        assert f.value([1.0, 1.0]) == pytest.approx(1.0)
        assert f.value([0.0, 0.0]) == 0.0
        np.testing.assert_allclose(f.grad([1.0, 1.0]), 0.0)
        assert f.monotone

    def test_monotone_factory(self):
        f = make_monotone_quadratic(10, np.random.default_rng(0))
        assert f.value(np.zeros(10)) == 0.0
        np.testing.assert_allclose(f.grad(np.ones(10)), 0.0, atol=1e-12)
        assert f.monotone and np.all(f.H <= 0)
        np.testing.assert_allclose(f.H, f.H.T)

    def test_nonmonotone_factory_nonnegative_on_packing(self):
        # |H_ij| <= 1 and h >= 0 give f >= n - (sum x)^2 / 2; bound sum x over P by an LP
        rng = np.random.default_rng(1)
        for n in (10, 20):
            P = PackingPolytope.random(n, n // 5, rng)
            f = make_nonmonotone_quadratic(n, rng)
            assert not f.monotone
            s_max = -linprog(-np.ones(n), A_ub=P.A, b_ub=P.b, bounds=[(0, 1)] * n).fun
            assert n - 0.5 * s_max ** 2 >= 0.0
            for _ in range(100):
                assert f.value(P.sample(rng)) >= 0.0

    def test_box_safe_offset_nonnegative_on_cube(self):
        rng = np.random.default_rng(2)
        V = np.array(list(itertools.product([0, 1], repeat=8)), float)
        for _ in range(30):
            f = make_nonmonotone_quadratic(8, rng, linear_scale=4.0, box_safe=True)
            # f is concave along every coordinate, so nonnegativity at vertices and
            # the explicit certificate together cover the cube
            assert -0.5 * f.H.sum() <= f.c + 1e-12
            assert min(f.value(v) for v in V) >= 0.0

    def test_gradient(self):
        f = make_nonmonotone_quadratic(6, np.random.default_rng(2))
        x = np.random.default_rng(3).random(6)
        np.testing.assert_allclose(f.grad(x), fd_grad(f.value, x), atol=1e-6)

    def test_rejects_positive_entries(self):
        with pytest.raises(ObjectiveError):
            QuadraticObjective(np.eye(2), np.zeros(2))

    def test_noisy_gradient_unbiased(self):
        f = make_monotone_quadratic(5, np.random.default_rng(4), noise=2.0)
        rng = np.random.default_rng(5)
        x = rng.random(5)
        draws = np.array([f.noisy_grad(x, rng) for _ in range(20000)])
        se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - f.grad(x)) < 3.5 * se)
        assert f.sigma2 == pytest.approx(4.0 * 5)

    def test_average_objective_closed_form(self):
        rng = np.random.default_rng(6)
        parts = [make_monotone_quadratic(4, rng) for _ in range(5)]
        avg = average_objective(parts)
        x = rng.random(4)
        assert avg.value(x) == pytest.approx(np.mean([p.value(x) for p in parts]))


class TestShift:
    def test_shift_makes_origin_zero(self):
        f = LinearObjective(np.ones(3), c=2.0)
        g = ensure_zero_at_origin(f)
        assert isinstance(g, ShiftedObjective)
        assert g.value(np.zeros(3)) == 0.0
        assert g.value(np.ones(3)) == pytest.approx(3.0)

    def test_shift_refuses_nonmonotone(self):
        f = make_nonmonotone_quadratic(3, np.random.default_rng(0))
        with pytest.raises(ObjectiveError):
            ShiftedObjective(f)


class TestGaussianNoise:
    def test_zero_scale_is_identity(self):
        g = np.arange(3.0)
        np.testing.assert_array_equal(GaussianNoise(0.0).perturb(g, np.random.default_rng(0)), g)


class TestSetFunctions:
    def setup_method(self):
        self.R = np.random.default_rng(0).integers(0, 6, size=(7, 6)).astype(float)
        self.f = facility_location_setfn(self.R)

    def test_singleton_is_column_mean(self):
        for m in range(6):
            assert self.f.eval(to_mask([m], 6)) == pytest.approx(self.R[:, m].mean())

    def test_full_set_is_mean_row_max(self):
        assert self.f.eval(np.ones(6, bool)) == pytest.approx(self.R.max(axis=1).mean())

    def test_submodular_on_random_triples(self):
        assert submodularity_violations(self.f, np.random.default_rng(1), 500) == 0

    def test_eval_many_matches_eval(self):
        masks = np.random.default_rng(2).random((40, 6)) < 0.5
        np.testing.assert_allclose(self.f.eval_many(masks), [self.f.eval(m) for m in masks])

    def test_regularized_examples(self):
        assert regularized_setfn(self.f, 0.0, 3).eval(to_mask([1, 2], 6)) == self.f.eval(to_mask([1, 2], 6))
        zero = ModularFunction(np.zeros(6))
        assert regularized_setfn(zero, 0.1, 5).eval(to_mask([0, 3], 6)) == pytest.approx(0.3)

    def test_regularized_multilinear_shift(self):
        g = RegularizedSetFunction(self.f, 0.2, 3.0)
        x = np.random.default_rng(3).random(6)
        assert brute_multilinear(g, x) == pytest.approx(brute_multilinear(self.f, x) + 0.2 * (3 - x.sum()))

    def test_ratings_csv(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("user,movie,rating\n2,10,4\n1,10,3.5\n1,7,5\n")
        R = load_ratings_csv(p)
        np.testing.assert_array_equal(R, [[5.0, 3.5], [0.0, 4.0]])

    def test_ratings_csv_bad_header(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ObjectiveError):
            load_ratings_csv(p)

    def test_synthetic_ratings_range(self):
        R = synthetic_ratings(30, 8, np.random.default_rng(0), half_stars=True)
        assert R.min() >= 0 and R.max() <= 5
        np.testing.assert_array_equal(R * 2, np.round(R * 2))


class TestMultilinear:
    def setup_method(self):
        self.R = np.random.default_rng(7).integers(0, 6, size=(5, 6)).astype(float)
        self.f = FacilityLocation(self.R)
        self.F = MultilinearExtension(self.f)

    def test_vertices(self):
        for bits in itertools.product([0, 1], repeat=6):
            x = np.array(bits, float)
            assert multilinear_value_exact(self.F, x) == pytest.approx(self.f.eval(x.astype(bool)))
        assert multilinear_value_exact(self.F, np.zeros(6)) == pytest.approx(self.f.eval(np.zeros(6, bool)))

    def test_cardinality_function(self):
        card = ModularFunction(np.ones(5))
        F = MultilinearExtension(card)
        x = np.random.default_rng(0).random(5)
        assert multilinear_value_exact(F, x) == pytest.approx(x.sum())
        np.testing.assert_allclose(multilinear_grad_exact(F, x), 1.0)

    def test_closed_form_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.random(6)
            assert self.F.value(x) == pytest.approx(brute_multilinear(self.f, x), abs=1e-10)
            np.testing.assert_allclose(self.F.grad(x), multilinear_grad_exact(self.F, x), atol=1e-10)
            np.testing.assert_allclose(self.F.grad(x), fd_grad(self.F.value, x), atol=1e-6)

    def test_sampled_gradient_unbiased(self):
        R = np.random.default_rng(2).random((6, 8))
        F = MultilinearExtension(FacilityLocation(R))
        x = np.random.default_rng(3).random(8)
        rng = np.random.default_rng(4)
        from drboost.objectives import marginal_vector
        draws = np.array([marginal_vector(F.base, rng.random(8) < x) for _ in range(100_000)])
        se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - multilinear_grad_exact(F, x)) < 3.5 * se)

    def test_sampled_gradient_modular_is_exact(self):
        w = np.array([1.0, -2.0, 0.5])
        F = MultilinearExtension(ModularFunction(w))
        np.testing.assert_allclose(multilinear_grad_sampled(F, [0.3, 0.6, 0.1], 5, np.random.default_rng(0)), w)

    def test_sampled_gradient_at_vertex_is_deterministic(self):
        F = MultilinearExtension(self.f)
        x = np.array([1, 0, 1, 0, 0, 1], float)
        a = multilinear_grad_sampled(F, x, 1, np.random.default_rng(0))
        b = multilinear_grad_sampled(F, x, 1, np.random.default_rng(99))
        np.testing.assert_array_equal(a, b)

    def test_large_ground_set_uses_closed_form_lazily(self):
        F = MultilinearExtension(FacilityLocation(np.random.default_rng(0).random((3, 40))))
        assert F._masks is None
        assert F.value(np.full(40, 0.5)) > 0
