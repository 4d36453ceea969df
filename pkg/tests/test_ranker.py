import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import dense_grid_oracle_2d, margin_objective
from rankad.dataset import DataMatrix
from rankad.ranker import (KernelConfig, PreferenceSet, RankModel, SolverOptions,
                           _HingeTerms, evaluate, evaluate_many, make_pairs, quantize,
                           rbf_kernel, train_ranksvm)


def matrix(rows):
    return DataMatrix(np.asarray(rows, dtype=np.float64))


class TestKernel:
    def test_bandwidth_must_be_positive(self):
        with pytest.raises(ValueError):
            KernelConfig(0.0)
        with pytest.raises(ValueError):
            KernelConfig(np.inf)

    def test_values_in_unit_interval_and_one_iff_equal(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((12, 3))
        gram = rbf_kernel(x, x, sigma=1.7)
        assert np.all(gram > 0) and np.all(gram <= 1)
        assert np.allclose(np.diag(gram), 1.0)
        off = gram[~np.eye(12, dtype=bool)]
        assert np.all(off < 1.0)

    def test_exact_formula(self):
        # sigma^2 in the denominator, no factor of 2
        value = rbf_kernel(np.array([[0.0]]), np.array([[2.0]]), sigma=2.0)[0, 0]
        assert value == pytest.approx(np.exp(-1.0), rel=1e-15)


class TestQuantize:
    def test_three_levels(self):
        assert quantize(np.array([0.1, 0.5, 0.9]), 3).tolist() == [1, 2, 3]

    def test_clamp_at_one(self):
        assert quantize(np.array([1.0]), 3).tolist() == [3]

    def test_bin_edge_at_one_third(self):
        assert quantize(np.array([0.32, 0.34]), 3).tolist() == [1, 2]

    def test_m_below_two_rejected(self):
        with pytest.raises(ValueError, match="2"):
            quantize(np.array([0.5]), 1)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="\\[0, 1\\]"):
            quantize(np.array([1.5]), 3)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.integers(2, 10))
    def test_levels_in_range(self, rs, m):
        levels = quantize(np.array(rs), m)
        assert np.all((levels >= 1) & (levels <= m))


class TestMakePairs:
    def test_three_point_enumeration(self):
        prefs = make_pairs(np.array([1, 2, 3]))
        assert set(map(tuple, prefs.pairs)) == {(1, 0), (2, 0), (2, 1)}

    def test_all_equal_gives_empty(self):
        assert len(make_pairs(np.array([2, 2, 2]))) == 0

    def test_balanced_three_levels_count(self):
        levels = np.repeat([1, 2, 3], 10)
        assert len(make_pairs(levels)) == 300

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(1, 5), min_size=2, max_size=40))
    def test_count_matches_cross_level_product(self, lv):
        levels = np.array(lv)
        prefs = make_pairs(levels)
        counts = np.bincount(levels, minlength=6)
        expected = sum(int(counts[a]) * int(counts[b])
                       for a in range(6) for b in range(a))
        assert len(prefs) == expected
        assert prefs.is_complete

    def test_cap_subsamples_exactly(self):
        levels = np.repeat([1, 2, 3], 10)
        capped = make_pairs(levels, max_pairs=50, seed=4)
        assert len(capped) == 50
        assert not capped.is_complete
        full = set(map(tuple, make_pairs(levels).pairs))
        assert set(map(tuple, capped.pairs)) <= full
        again = make_pairs(levels, max_pairs=50, seed=4)
        assert np.array_equal(capped.pairs, again.pairs)

    def test_cap_requires_seed(self):
        with pytest.raises(ValueError, match="seed"):
            make_pairs(np.repeat([1, 2], 20), max_pairs=5)

    def test_invalid_pairs_rejected(self):
        with pytest.raises(ValueError, match="higher level"):
            PreferenceSet(np.array([[0, 1]]), np.array([1, 2]))
        with pytest.raises(ValueError, match="duplicate"):
            PreferenceSet(np.array([[1, 0], [1, 0]]), np.array([1, 2]))


class TestHingePaths:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2000))
    def test_bucket_path_matches_explicit_pairs(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 30))
        levels = rng.integers(1, 4, n)
        if np.unique(levels).size < 2:
            levels[0] = 1
            levels[-1] = 3
        prefs = make_pairs(levels)
        fast = _HingeTerms(prefs)
        slow = _HingeTerms(prefs)
        slow.buckets = None
        s = rng.standard_normal(n) * 2
        assert fast.hinge(s) == pytest.approx(slow.hinge(s), rel=1e-9, abs=1e-9)
        for delta in (1.0, 1e-3):
            lf, gf = fast.smoothed(s, delta)
            ls, gs = slow.smoothed(s, delta)
            assert lf == pytest.approx(ls, rel=1e-9, abs=1e-9)
            assert np.allclose(gf, gs, rtol=1e-9, atol=1e-9)
        assert np.allclose(fast.slack(s), slow.slack(s))


class TestTrainRankSvm:
    def test_two_point_margin_and_dense_grid_oracle(self):
        data = matrix([[0.0], [1.0]])
        prefs = PreferenceSet(np.array([[1, 0]]), np.array([1, 2]))
        model = train_ranksvm(data, prefs, KernelConfig(1.0), 10.0)
        g0, g1 = evaluate(model, [0.0]), evaluate(model, [1.0])
        assert g1 - g0 >= 1 - 1e-3
        oracle = dense_grid_oracle_2d(rbf_kernel(data.points, data.points, 1.0),
                                      prefs.pairs, 10.0, step=1e-3)
        assert model.objective <= oracle + 1e-3

    def test_collinear_points_rank_monotone(self):
        data = matrix([[0.0], [1.0], [2.0], [3.0]])
        levels = np.array([1, 2, 3, 4])
        model = train_ranksvm(data, make_pairs(levels), KernelConfig(2.0), 10.0)
        scores = evaluate_many(model, data.points)
        assert np.all(np.diff(scores) > 0)

    def test_vanishing_c_gives_empty_model_and_pair_count_objective(self):
        rng = np.random.default_rng(1)
        data = DataMatrix(rng.standard_normal((12, 2)))
        prefs = make_pairs(quantize(rng.uniform(0, 1, 12), 3))
        model = train_ranksvm(data, prefs, KernelConfig(1.0), 1e-12)
        assert model.n_support == 0
        assert abs(model.objective - 1e-12 * len(prefs)) < 1e-9

    def test_objective_history_non_increasing(self):
        rng = np.random.default_rng(2)
        data = DataMatrix(rng.standard_normal((25, 2)))
        prefs = make_pairs(quantize(rng.uniform(0, 1, 25), 3))
        model = train_ranksvm(data, prefs, KernelConfig(0.8), 2.0)
        assert np.all(np.diff(model.objective_history) <= 0)

    def test_two_initializations_agree(self):
        rng = np.random.default_rng(3)
        data = DataMatrix(rng.standard_normal((3, 2)))
        prefs = make_pairs(np.array([1, 2, 3]))
        a = train_ranksvm(data, prefs, KernelConfig(1.0), 5.0)
        b = train_ranksvm(data, prefs, KernelConfig(1.0), 5.0,
                          options=SolverOptions(init=rng.standard_normal(3)))
        assert abs(a.objective - b.objective) <= 1e-4 * max(1.0, abs(a.objective))

    def test_empty_preference_set_rejected(self):
        data = matrix([[0.0], [1.0]])
        with pytest.raises(ValueError, match="empty"):
            train_ranksvm(data, make_pairs(np.array([1, 1])), KernelConfig(1.0), 1.0)

    def test_nonpositive_c_rejected(self):
        data = matrix([[0.0], [1.0]])
        prefs = PreferenceSet(np.array([[1, 0]]), np.array([1, 2]))
        with pytest.raises(ValueError, match="positive"):
            train_ranksvm(data, prefs, KernelConfig(1.0), 0.0)

    def test_separable_instance_has_zero_training_disagreement(self):
        # clusters far apart, large C: every training pair ends up satisfied
        data = matrix([[0.0], [100.0], [200.0]])
        prefs = make_pairs(np.array([1, 2, 3]))
        model = train_ranksvm(data, prefs, KernelConfig(80.0), 100.0)
        scores = evaluate_many(model, data.points)
        hi, lo = prefs.pairs[:, 0], prefs.pairs[:, 1]
        assert int(np.sum(scores[hi] <= scores[lo])) == 0

    def test_rkhs_norm_nonnegative_and_support_bound(self):
        rng = np.random.default_rng(4)
        data = DataMatrix(rng.standard_normal((20, 2)))
        prefs = make_pairs(quantize(rng.uniform(0, 1, 20), 3))
        model = train_ranksvm(data, prefs, KernelConfig(1.5), 1.0)
        assert model.n_support <= data.n
        gram_ss = rbf_kernel(model.support_points, model.support_points,
                             model.kernel.sigma)
        assert float(model.coefficients @ gram_ss @ model.coefficients) >= -1e-12

    def test_reported_objective_matches_direct_summation(self):
        rng = np.random.default_rng(5)
        data = DataMatrix(rng.standard_normal((10, 2)))
        prefs = make_pairs(quantize(rng.uniform(0, 1, 10), 3))
        model = train_ranksvm(data, prefs, KernelConfig(1.0), 2.0)
        # rebuild the full coefficient vector over training points
        beta = np.zeros(data.n)
        taken = 0
        for i in range(data.n):
            if taken < model.n_support and np.array_equal(model.support_points[taken],
                                                          data.points[i]):
                beta[i] = model.coefficients[taken]
                taken += 1
        direct = margin_objective(rbf_kernel(data.points, data.points, 1.0),
                                  prefs.pairs, 2.0, beta)
        assert model.objective == pytest.approx(direct, rel=1e-9, abs=1e-9)


class TestEvaluate:
    def test_single_support_at_query(self):
        model = RankModel(np.array([[1.0, 2.0]]), np.array([1.0]), KernelConfig(1.0), 0.0)
        assert evaluate(model, [1.0, 2.0]) == 1.0

    def test_far_query_underflows_to_zero(self):
        model = RankModel(np.array([[0.0]]), np.array([1.0]), KernelConfig(1.0), 0.0)
        assert evaluate(model, [100.0]) == 0.0

    def test_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(6)
        support = rng.standard_normal((5, 3))
        coef = rng.standard_normal(5)
        model = RankModel(support, coef, KernelConfig(1.3), 0.0)
        query = rng.standard_normal(3)
        expected = sum(
            c * np.exp(-np.sum((p - query) ** 2) / 1.3 ** 2)
            for c, p in zip(coef, support)
        )
        assert evaluate(model, query) == pytest.approx(expected, abs=1e-12)

    def test_dimension_mismatch(self):
        model = RankModel(np.array([[0.0, 0.0]]), np.array([1.0]), KernelConfig(1.0), 0.0)
        with pytest.raises(ValueError, match="dimension"):
            evaluate(model, [1.0])
        with pytest.raises(ValueError, match="dimension"):
            evaluate_many(model, np.zeros((3, 3)))

    def test_evaluate_many_matches_scalar(self):
        rng = np.random.default_rng(7)
        model = RankModel(rng.standard_normal((4, 2)), rng.standard_normal(4),
                          KernelConfig(0.9), 0.0)
        queries = rng.standard_normal((6, 2))
        vec = evaluate_many(model, queries)
        for i, q in enumerate(queries):
            assert vec[i] == pytest.approx(evaluate(model, q), rel=1e-12)

    def test_empty_model_scores_zero(self):
        model = RankModel(np.empty((0, 2)), np.empty(0), KernelConfig(1.0), 0.0)
        assert evaluate(model, [1.0, 1.0]) == 0.0
        assert np.array_equal(evaluate_many(model, np.ones((3, 2))), np.zeros(3))
