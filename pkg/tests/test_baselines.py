import numpy as np
import pytest
from scipy.stats import chisquare

from sparsim import Dataset, gen_synthetic, predict_batch
from sparsim.baselines import (
    SelectionMethod,
    baseline_pipeline,
    kernel_ridge_full,
    lasso_kkt_residuals,
    lasso_similarity,
    ps_border,
    ps_kmedians,
    ps_random,
    ps_spanning,
    set_median_index,
)
from sparsim.errors import ConvergenceError
from sparsim.similarity import SimilaritySpec, sim_matrix

RBF1 = SimilaritySpec(kind="rbf", gamma=1.0)


def spread_instance(seed=7, n=12):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.permutation(n) * 1.0, rng.permutation(n) * 1.0])
    y = rng.normal(0, 1, n)
    u = rng.uniform(0.5, 2.0, n)
    return Dataset(features=X, targets=y, weights=u)


class TestPsRandom:
    def test_full_draw(self, rng):
        data = Dataset(features=rng.normal(0, 1, (6, 2)), targets=np.ones(6))
        assert sorted(ps_random(data, 6, seed=0).tolist()) == list(range(6))

    def test_reproducible(self, rng):
        data = Dataset(features=rng.normal(0, 1, (20, 2)), targets=np.ones(20))
        np.testing.assert_array_equal(ps_random(data, 5, seed=3), ps_random(data, 5, seed=3))

    def test_uniformity_chi_square(self, rng):
        data = Dataset(features=rng.normal(0, 1, (10, 2)), targets=np.ones(10))
        counts = np.zeros(10)
        for seed in range(10_000):
            for idx in ps_random(data, 3, seed=seed):
                counts[idx] += 1
        _, p = chisquare(counts)
        assert p > 0.01

    def test_distinct_in_range(self, rng):
        data = Dataset(features=rng.normal(0, 1, (15, 2)), targets=np.ones(15))
        idx = ps_random(data, 7, seed=1)
        assert len(set(idx.tolist())) == 7
        assert idx.min() >= 0 and idx.max() < 15


class TestPsBorder:
    def test_collinear_endpoint(self):
        data = Dataset(features=[[0.0], [1.0], [2.0]], targets=np.ones(3))
        idx = ps_border(data, 1)
        assert idx[0] in (0, 2)

    def test_full_draw(self, rng):
        data = Dataset(features=rng.normal(0, 1, (5, 2)), targets=np.ones(5))
        assert sorted(ps_border(data, 5).tolist()) == list(range(5))

    def test_ring_and_center_selects_ring(self):
        data = gen_synthetic("ring", n=50, seed=0)
        idx = ps_border(data, 4)
        radii = np.linalg.norm(data.features[idx], axis=1)
        assert np.all(radii > 1.0)  # ring points sit near radius 2, blob near 0


class TestPsSpanning:
    def test_first_is_set_median(self, rng):
        X = rng.normal(0, 1, (15, 3))
        data = Dataset(features=X, targets=np.ones(15))
        idx = ps_spanning(data, 1)
        # independent oracle: explicit summed-distance argmin
        sums = [np.sum([np.linalg.norm(a - b) for b in X]) for a in X]
        assert idx[0] == int(np.argmin(sums))

    def test_second_pick_crosses_clusters(self, rng):
        left = rng.normal([-3, 0], 0.2, (6, 2))
        right = rng.normal([3, 0], 0.2, (4, 2))
        data = Dataset(features=np.vstack([left, right]), targets=np.ones(10))
        idx = ps_spanning(data, 2)
        # median lives in the bigger cluster, the next pick in the other one
        assert (idx[0] < 6) != (idx[1] < 6)

    def test_distinct(self, rng):
        data = Dataset(features=rng.normal(0, 1, (12, 2)), targets=np.ones(12))
        idx = ps_spanning(data, 6)
        assert len(set(idx.tolist())) == 6


class TestPsKmedians:
    def test_planted_clusters_one_pick_each(self, rng):
        centers = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])
        X = np.vstack([rng.normal(c, 0.3, (7, 2)) for c in centers])
        data = Dataset(features=X, targets=np.ones(21))
        idx = ps_kmedians(data, 3, seed=0)
        buckets = {0: 0, 1: 0, 2: 0}
        for i in idx:
            buckets[i // 7] += 1
        assert all(v == 1 for v in buckets.values())

    def test_single_cluster_is_global_median(self, rng):
        X = rng.normal(0, 1, (11, 2))
        data = Dataset(features=X, targets=np.ones(11))
        idx = ps_kmedians(data, 1, seed=0)
        assert idx[0] == set_median_index(X)

    def test_m_larger_than_n_rejected(self, rng):
        data = Dataset(features=rng.normal(0, 1, (3, 2)), targets=np.ones(3))
        with pytest.raises(ValueError):
            ps_kmedians(data, 4, seed=0)


class TestPipeline:
    def test_prototypes_are_bitwise_training_rows(self, rng):
        data = Dataset(features=rng.normal(0, 1, (15, 3)), targets=rng.normal(0, 1, 15))
        for kind in ("random", "border", "spanning", "kmedians"):
            model = baseline_pipeline(data, SelectionMethod(kind=kind, m=4, seed=2), 1e-6, RBF1)
            assert model.m == 4
            for row in model.prototypes:
                assert any(np.array_equal(row, feat) for feat in data.features)

    def test_random_full_equals_kernel_ridge(self, rng):
        data = Dataset(features=rng.normal(0, 1, (10, 2)), targets=rng.normal(0, 1, 10))
        piped = baseline_pipeline(data, SelectionMethod(kind="random", m=10, seed=0), 1e-4, RBF1)
        ridge = kernel_ridge_full(data, 1e-4, RBF1)
        probe = rng.normal(0, 1, (20, 2))
        np.testing.assert_allclose(
            predict_batch(piped, probe), predict_batch(ridge, probe), rtol=1e-8, atol=1e-10
        )


class TestKernelRidgeFull:
    def test_interpolates_at_zero_lambda(self):
        data = spread_instance(seed=3, n=8)
        model = kernel_ridge_full(data, 0.0, RBF1)
        np.testing.assert_allclose(predict_batch(model, data.features), data.targets, atol=1e-8)

    def test_constant_targets(self, rng):
        data = Dataset(features=rng.normal(0, 1, (9, 2)), targets=np.full(9, 4.2))
        model = kernel_ridge_full(data, 0.1, RBF1)
        np.testing.assert_allclose(model.beta, 0.0, atol=1e-9)
        assert model.bias == pytest.approx(4.2, rel=1e-10)

    def test_matches_direct_solve(self, rng):
        from sparsim.ridge import assemble, solve

        data = Dataset(features=rng.normal(0, 1, (12, 2)), targets=rng.normal(0, 1, 12))
        model = kernel_ridge_full(data, 1e-3, RBF1)
        S = sim_matrix(RBF1, data.features, data.features)
        beta, bias = solve(assemble(S, data.weights, data.targets, 1e-3))
        np.testing.assert_allclose(model.beta, beta, rtol=1e-12)
        assert model.bias == pytest.approx(bias, rel=1e-12)


class TestLasso:
    def test_large_penalty_kills_all_coefficients(self):
        data = spread_instance()
        S = sim_matrix(RBF1, data.features, data.features).values
        ybar = float(np.sum(data.weights * data.targets) / np.sum(data.weights))
        lam_max = 2 * np.max(np.abs(((data.targets - ybar) * data.weights) @ S))
        model = lasso_similarity(data, lam_max * 1.01, RBF1)
        np.testing.assert_array_equal(model.beta, np.zeros(model.m))
        assert model.bias == pytest.approx(ybar, rel=1e-12)

    def test_zero_penalty_matches_least_squares_oracle(self):
        # the design has an unpenalized intercept over n prototypes, so the
        # coefficients are non-unique; fitted values are the unique object
        data = spread_instance()
        model = lasso_similarity(data, 0.0, RBF1, tol=1e-10)
        S = sim_matrix(RBF1, data.features, data.features).values
        A = np.column_stack([S, np.ones(data.n)])
        w = np.sqrt(data.weights)
        coef, *_ = np.linalg.lstsq(w[:, None] * A, w * data.targets, rcond=None)
        np.testing.assert_allclose(predict_batch(model, data.features), A @ coef, atol=1e-6)

    def test_kkt_residuals_below_tolerance(self):
        data = spread_instance()
        S = sim_matrix(RBF1, data.features, data.features).values
        for lam1 in (1e-3, 1e-2, 0.1, 0.5, 2.0):
            model = lasso_similarity(data, lam1, RBF1)
            full = np.zeros(data.n)
            for b, i in zip(model.beta, model.metadata["indices"]):
                full[i] = b
            res = lasso_kkt_residuals(S, data.weights, data.targets, full, model.bias, lam1)
            assert res.max() <= 1e-6

    def test_sparsity_non_increasing_along_path(self):
        data = spread_instance(seed=11)
        path = np.geomspace(1e-3, 5.0, 10)
        sizes = []
        for lam1 in path:
            model = lasso_similarity(data, lam1, RBF1)
            sizes.append(int(np.sum(model.beta != 0)))
        assert all(a >= b for a, b in zip(sizes, sizes[1:]))

    def test_nonconvergence_reports_residual(self, rng):
        # nearly-duplicate columns with a tiny budget cannot reach optimality
        X = np.vstack([rng.normal(0, 0.01, (10, 2))])
        data = Dataset(features=X, targets=rng.normal(0, 1, 10))
        with pytest.raises(ConvergenceError, match="residual"):
            lasso_similarity(data, 1e-6, RBF1, max_sweeps=3)

    def test_rejects_negative_penalty(self):
        with pytest.raises(ValueError):
            lasso_similarity(spread_instance(), -1.0, RBF1)
