import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forest_lab import (
    BoundInputs,
    ModelSpec,
    SelectionProbs,
    expected_overlap,
    expected_overlap_mc,
    fit_rate_exponent,
    halving_upper_bound,
    mc_bias_variance,
    mc_risk,
    multinomial_halving_expectation,
    multinomial_halving_mc,
    normal_approx_check,
    simulate_forest_predictions,
    variance_upper_bound,
)
from forest_lab.analytics import MAX_EXACT_PAIR_TERMS, _compositions, _halving_binomial, _multinomial_pmf


class TestMultinomialEnumeration:
    def test_hand_values(self):
        assert multinomial_halving_expectation(1, [0.5, 0.5]) == pytest.approx(0.75, abs=1e-14)
        assert multinomial_halving_expectation(2, [0.5, 0.5]) == pytest.approx(0.65625, abs=1e-14)

    def test_degenerate_cases(self):
        assert multinomial_halving_expectation(0, [0.3, 0.7]) == 1.0
        assert multinomial_halving_expectation(5, [1.0]) == 1.0
        assert multinomial_halving_expectation(5, [0.0, 1.0]) == 1.0

    def test_two_category_fast_path_equals_generic(self):
        # the O(m) factored sum must agree with the composition double loop
        for m in (1, 2, 5, 9):
            for p1 in (0.5, 0.3, 0.9):
                counts = _compositions(m, 2)
                pmf = _multinomial_pmf(counts, np.array([p1, 1 - p1]))
                diff = np.abs(counts[:, None, :] - counts[None, :, :]).sum(axis=2)
                generic = float((pmf[:, None] * pmf[None, :] * np.exp2(-0.5 * diff)).sum())
                assert _halving_binomial(m, p1) == pytest.approx(generic, rel=1e-12)

    def test_three_category_value_against_direct_sum(self):
        # independent brute force over raw outcomes for tiny m
        m, p = 2, np.array([0.2, 0.3, 0.5])
        outcomes = [(i, j, m - i - j) for i in range(m + 1) for j in range(m + 1 - i) ]
        def pmf(c):
            return math.factorial(m) / math.prod(math.factorial(v) for v in c) * math.prod(
                pv**v for pv, v in zip(p, c)
            )
        direct = sum(
            pmf(a) * pmf(b) * 2.0 ** (-0.5 * sum(abs(x - y) for x, y in zip(a, b)))
            for a in outcomes
            for b in outcomes
        )
        assert multinomial_halving_expectation(m, p) == pytest.approx(direct, rel=1e-12)

    def test_matches_mc(self):
        exact = multinomial_halving_expectation(6, [1 / 3] * 3)
        mc = multinomial_halving_mc(6, [1 / 3] * 3, samples=200000, seed=2)
        assert abs(mc.value - exact) <= 3 * mc.stderr

    def test_upper_bound_holds(self):
        for k in (2, 3):
            p = [1.0 / k] * k
            for m in range(1, 9):
                assert multinomial_halving_expectation(m, p) <= halving_upper_bound(m, p)

    def test_support_cutoff(self):
        needed = math.comb(600 + 3 - 1, 2)
        assert needed * needed > MAX_EXACT_PAIR_TERMS
        with pytest.raises(ValueError):
            multinomial_halving_expectation(600, [1 / 3] * 3)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            multinomial_halving_expectation(3, [0.5, 0.6])
        with pytest.raises(ValueError):
            multinomial_halving_expectation(-1, [0.5, 0.5])


class TestExpectedOverlap:
    def test_single_strong_coordinate_is_exact_power(self):
        for depth in (0, 1, 5, 9):
            assert expected_overlap([1.0], depth) == math.ldexp(1.0, -depth)

    def test_depth_one_hand_value(self):
        assert expected_overlap([0.5, 0.5], 1) == pytest.approx(0.375, abs=1e-14)

    def test_mc_agrees_with_enumeration(self):
        for depth in (3, 8, 12):
            exact = expected_overlap([0.5, 0.5], depth)
            mc = expected_overlap_mc([0.5, 0.5], depth, samples=40000, seed=depth)
            assert abs(mc.value - exact) <= 3 * mc.stderr


class TestNormalApproxCheck:
    def test_m_100_within_factor_two(self):
        check = normal_approx_check(100, 0.5)
        assert 0.5 <= check.ratio <= 2.0

    def test_ratio_converges_to_lattice_constant(self):
        # The count difference lives on the integer lattice, so the exact sum
        # approaches (sum_d 2^-|d|) / (integral 2^-|t| dt) = 3 ln 2 / 2 times
        # the continuous approximation, not exactly 1.
        limit = 1.5 * math.log(2.0)
        ratios = [normal_approx_check(m, 0.5).ratio for m in (100, 1000, 10000)]
        gaps = [abs(limit - r) for r in ratios]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 0.001
        assert all(0.5 <= r <= 2.0 for r in ratios)

    def test_skewed_probability_reported_only(self):
        check = normal_approx_check(50, 0.02)
        assert check.exact > 0 and check.approx > 0  # approximation may be poor; just report

    def test_domain(self):
        with pytest.raises(ValueError):
            normal_approx_check(100, 0.0)


class TestFitRateExponent:
    def test_exact_negative_power_law(self):
        fit = fit_rate_exponent([(s, s**-0.5) for s in (2, 4, 8, 16)])
        assert fit.exponent == pytest.approx(-0.5, abs=1e-12)
        assert fit.stderr == pytest.approx(0.0, abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_exact_quadratic_with_intercept(self):
        fit = fit_rate_exponent([(s, 3.0 * s**2) for s in (1, 2, 3, 4)])
        assert fit.exponent == pytest.approx(2.0, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_rate_exponent([(1.0, 1.0), (2.0, 0.5)])
        with pytest.raises(ValueError):
            fit_rate_exponent([(1.0, 1.0), (2.0, -0.5), (3.0, 0.2)])
        with pytest.raises(ValueError):
            fit_rate_exponent([(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)])

    @given(
        expo=st.floats(-3, 3),
        scale=st.floats(0.1, 10),
        xs=st.lists(st.floats(0.5, 100), min_size=3, max_size=8, unique=True),
    )
    @settings(max_examples=60)
    def test_recovers_synthetic_power_laws(self, expo, scale, xs):
        fit = fit_rate_exponent([(x, scale * x**expo) for x in xs])
        assert fit.exponent == pytest.approx(expo, abs=1e-6)


class TestMcRisk:
    def test_constant_noiseless_is_exactly_zero(self):
        spec = ModelSpec.constant(1, value=1.5, sigma=0.0)
        est = mc_risk(spec, n=256, k_n=8, probs=SelectionProbs((1.0,)), n_trees=3, replicates=8, seed=0)
        assert est.mse == 0.0

    def test_matches_decomposition_total(self):
        spec = ModelSpec.sparse_linear([1.0, 0.5], sigma=0.3)
        probs = SelectionProbs.ideal((0, 1), 2)
        risk = mc_risk(spec, n=512, k_n=16, probs=probs, n_trees=24, replicates=60, seed=3, queries=8)
        dec = mc_bias_variance(spec, n=512, k_n=16, probs=probs, n_trees=24, r_outer=6, r_inner=10, seed=4, queries=8)
        combined = math.hypot(risk.stderr, dec.total_se)
        assert abs(risk.mse - dec.total_mse) <= 3.5 * combined

    def test_threads_do_not_change_results(self):
        spec = ModelSpec.sparse_linear([1.0], sigma=0.1)
        a = mc_risk(spec, 256, 8, SelectionProbs((1.0,)), 4, 12, seed=9, threads=1)
        b = mc_risk(spec, 256, 8, SelectionProbs((1.0,)), 4, 12, seed=9, threads=4)
        assert a == b


class TestMcBiasVariance:
    def test_constant_noiseless_all_zero(self):
        spec = ModelSpec.constant(2, value=2.0, sigma=0.0)
        dec = mc_bias_variance(spec, 128, 4, SelectionProbs.uniform(2), 4, 4, 4, seed=1, queries=4)
        assert dec.variance_term == 0.0
        assert dec.bias_sq_term == 0.0
        assert dec.total_mse == 0.0

    def test_pure_noise_has_no_bias(self):
        spec = ModelSpec.constant(1, value=0.0, sigma=1.0)
        dec = mc_bias_variance(spec, 512, 16, SelectionProbs((1.0,)), 8, 10, 12, seed=2, queries=8)
        assert abs(dec.bias_sq_term) <= 3 * dec.bias_sq_se
        assert dec.variance_term > 0

    def test_identity_total_equals_sum(self):
        spec = ModelSpec.sparse_linear([1.0, 1.0], sigma=0.5)
        dec = mc_bias_variance(spec, 256, 8, SelectionProbs.uniform(2), 8, 5, 8, seed=3, queries=4)
        assert dec.total_mse == pytest.approx(dec.variance_term + dec.bias_sq_term, rel=1e-12)

    def test_variance_below_bound_small_grid(self):
        spec = ModelSpec.sparse_linear([1.0], sigma=0.1)
        probs = SelectionProbs((1.0,))
        for n, k in ((1024, 16), (2048, 32)):
            dec = mc_bias_variance(spec, n, k, probs, 8, 8, 12, seed=5, queries=8)
            bound = variance_upper_bound(BoundInputs(n, k, 1, 1, 0.1, 1.0, 1.0))
            assert dec.variance_term - 3 * dec.variance_se <= bound

    def test_replicate_validation(self):
        spec = ModelSpec.constant(1, 0.0, 0.0)
        with pytest.raises(ValueError):
            mc_bias_variance(spec, 16, 4, SelectionProbs((1.0,)), 2, 4, 1, seed=0)
        with pytest.raises(ValueError):
            mc_bias_variance(spec, 16, 4, SelectionProbs((1.0,)), 2, 1, 4, seed=0)


class TestSimulateForestPredictions:
    def test_deterministic_given_seeds(self):
        spec = ModelSpec.sparse_linear([1.0, 1.0], sigma=0.2)
        probs = SelectionProbs.uniform(2)
        qx = np.array([[0.2, 0.8], [0.6, 0.4]])
        a = simulate_forest_predictions(spec, 128, 8, probs, 6, qx, 11, 12)
        b = simulate_forest_predictions(spec, 128, 8, probs, 6, qx, 11, 12)
        assert (a == b).all()

    def test_one_dim_single_tree_shortcut_is_exact(self):
        # all depth-D trees coincide in one dimension, so averaging over any
        # M must equal the single-tree value
        from forest_lab import CenteredTree, tree_predict
        from forest_lab.rng import derive, generator

        spec = ModelSpec.sparse_linear([1.0], sigma=0.0)
        probs = SelectionProbs((1.0,))
        qx = np.array([[0.37]])
        pred = simulate_forest_predictions(spec, 64, 8, probs, 50, qx, 21, 22)
        data = spec.sample(64, generator(21))
        tree = CenteredTree(derive(22, 0), 3, probs)
        assert pred[0] == tree_predict(tree, data, [0.37])
