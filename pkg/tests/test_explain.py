import itertools
import math

import numpy as np
import pytest

from carenet import explain


def linear_model(w, b=0.0):
    w = np.asarray(w, dtype=np.float64)
    return lambda X: X @ w + b


def brute_force_permutation_shapley(model_fn, x, baseline, subset):
    """Oracle straight from the permutation definition: average marginal
    contribution over all orderings of the subset."""
    s = len(subset)
    values = {j: 0.0 for j in subset}
    for perm in itertools.permutations(subset):
        z = x.copy()
        z[list(subset)] = baseline[list(subset)]
        prev = float(model_fn(z[None, :])[0])
        for j in perm:
            z[j] = x[j]
            cur = float(model_fn(z[None, :])[0])
            values[j] += cur - prev
            prev = cur
    n_perms = math.factorial(s)
    out = np.zeros_like(x)
    for j in subset:
        out[j] = values[j] / n_perms
    return out


class TestShapleyExact:
    def test_linear_model_closed_form(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=6)
        x = rng.normal(size=6)
        res = explain.shapley_exact(linear_model(w, b=0.4), x, np.zeros(6))
        assert np.allclose(res.values, w * x, atol=1e-12)

    def test_symmetric_max_model_equal_credit(self):
        model = lambda X: X.max(axis=1)
        res = explain.shapley_exact(model, np.array([1.0, 1.0]), np.zeros(2))
        assert res.values[0] == res.values[1]
        assert abs(res.values.sum() - 1.0) < 1e-12

    def test_matches_permutation_oracle(self):
        rng = np.random.default_rng(1)
        d = 8
        W1 = rng.normal(size=(d, 5))
        w2 = rng.normal(size=5)

        def model(X):
            return np.tanh(X @ W1) @ w2

        x = rng.normal(size=d)
        baseline = rng.normal(size=d) * 0.3
        subset = tuple(range(d))
        res = explain.shapley_exact(model, x, baseline)
        oracle = brute_force_permutation_shapley(model, x, baseline, subset)
        assert np.allclose(res.values, oracle, atol=1e-10)

    def test_subset_mode_fixes_other_features_at_x(self):
        rng = np.random.default_rng(2)
        w = rng.normal(size=10)
        x = rng.normal(size=10)
        baseline = np.zeros(10)
        subset = (1, 4, 7)
        res = explain.shapley_exact(linear_model(w), x, baseline, feature_subset=subset)
        for j in range(10):
            if j in subset:
                assert math.isclose(res.values[j], w[j] * x[j], rel_tol=1e-12)
            else:
                assert res.values[j] == 0.0
        # efficiency holds against the effective baseline
        assert res.efficiency_residual <= 1e-8

    def test_efficiency_residual_tiny(self):
        rng = np.random.default_rng(3)
        model = lambda X: np.sin(X).sum(axis=1) + (X**2).sum(axis=1)
        x = rng.normal(size=10)
        res = explain.shapley_exact(model, x, rng.normal(size=10))
        assert res.efficiency_residual <= 1e-8

    def test_too_many_features_directs_to_sampled(self):
        with pytest.raises(explain.SubsetSizeError, match="shapley_sampled"):
            explain.shapley_exact(linear_model(np.ones(25)), np.ones(25), np.zeros(25))

    def test_duplicate_subset_rejected(self):
        with pytest.raises(ValueError):
            explain.shapley_exact(
                linear_model(np.ones(5)), np.ones(5), np.zeros(5), feature_subset=(1, 1)
            )


class TestShapleySampled:
    def model_and_point(self, d=12, seed=4):
        rng = np.random.default_rng(seed)
        W1 = rng.normal(size=(d, 6)) * 0.7
        w2 = rng.normal(size=6)

        def model(X):
            return np.tanh(X @ W1) @ w2

        return model, rng.normal(size=d), rng.normal(size=d) * 0.2

    def test_close_to_exact_on_small_instance(self):
        model, x, baseline = self.model_and_point()
        exact = explain.shapley_exact(model, x, baseline)
        sampled = explain.shapley_sampled(model, x, baseline, n_permutations=4000, seed=9)
        assert np.abs(sampled.values - exact.values).max() <= 0.05

    def test_deterministic_per_seed(self):
        model, x, baseline = self.model_and_point()
        a = explain.shapley_sampled(model, x, baseline, n_permutations=50, seed=7)
        b = explain.shapley_sampled(model, x, baseline, n_permutations=50, seed=7)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.standard_errors, b.standard_errors)

    def test_standard_errors_scale_as_inverse_sqrt(self):
        model, x, baseline = self.model_and_point()
        se1 = explain.shapley_sampled(model, x, baseline, n_permutations=2000, seed=1)
        se2 = explain.shapley_sampled(model, x, baseline, n_permutations=4000, seed=1)
        busy = se1.standard_errors > 1e-6
        ratio = se2.standard_errors[busy] / se1.standard_errors[busy]
        assert abs(np.median(ratio) - 1.0 / math.sqrt(2.0)) < 0.2 / math.sqrt(2.0)

    def test_dummy_feature_within_three_standard_errors(self):
        rng = np.random.default_rng(11)
        w = rng.normal(size=10)
        w[3] = 0.0  # the model ignores feature 3

        def model(X):
            return np.tanh(X @ w)

        x = rng.normal(size=10)
        res = explain.shapley_sampled(model, x, np.zeros(10), n_permutations=2000, seed=2)
        assert abs(res.values[3]) <= max(3.0 * res.standard_errors[3], 1e-12)

    def test_efficiency_telescopes(self):
        model, x, baseline = self.model_and_point()
        res = explain.shapley_sampled(model, x, baseline, n_permutations=200, seed=3)
        assert res.efficiency_residual <= 1e-10

    def test_bad_permutation_count(self):
        model, x, baseline = self.model_and_point()
        with pytest.raises(ValueError):
            explain.shapley_sampled(model, x, baseline, n_permutations=0)


class TestRanking:
    def test_single_instance_ranking_is_abs_sort(self):
        values = np.array([0.1, -0.7, 0.3, 0.0])
        res = explain.ShapResult(
            values=values, baseline_output=0.0, model_output=float(values.sum()),
            baseline=np.zeros(4),
        )
        ranking = explain.rank_attributes([res], names=list("abcd"))
        assert ranking.order == [1, 2, 0, 3]
        assert ranking.rank_of(1) == 1

    def test_identical_instances_match_single(self):
        rng = np.random.default_rng(6)
        values = rng.normal(size=7)
        mk = lambda: explain.ShapResult(
            values=values.copy(), baseline_output=0.0,
            model_output=float(values.sum()), baseline=np.zeros(7),
        )
        single = explain.rank_attributes([mk()])
        cohort = explain.rank_attributes([mk() for _ in range(5)])
        assert single.order == cohort.order
        assert np.allclose(single.mean_abs, cohort.mean_abs)

    def test_ranges_consistent(self):
        rng = np.random.default_rng(8)
        results = [
            explain.ShapResult(
                values=rng.normal(size=5), baseline_output=0.0, model_output=0.0,
                baseline=np.zeros(5),
            )
            for _ in range(10)
        ]
        ranking = explain.rank_attributes(results)
        V = np.stack([r.values for r in results])
        assert np.array_equal(ranking.value_min, V.min(axis=0))
        assert np.array_equal(ranking.value_max, V.max(axis=0))
        # descending order with index tie-break
        for a, b in zip(ranking.order, ranking.order[1:]):
            assert (ranking.mean_abs[a], -a) >= (ranking.mean_abs[b], -b)

    def test_empty_cohort_rejected(self):
        with pytest.raises(ValueError):
            explain.rank_attributes([])
