import numpy as np
import pytest

from conftest import resolve_coefficients

from sparsim import Dataset, SparseModel, TrainConfig, distill, fit, predict_batch
from sparsim.similarity import SimilaritySpec, default_spec
from sparsim.training import init_prototypes

RBF1 = SimilaritySpec(kind="rbf", gamma=1.0)


def planted_dataset(seed, protos, beta, bias, n=20, spec=RBF1):
    rng = np.random.default_rng(seed)
    planted = SparseModel(prototypes=protos, beta=beta, bias=bias, similarity=spec)
    X = rng.normal(0, 1, (n, protos.shape[1]))
    X[: protos.shape[0]] = protos  # make the planted prototypes selectable rows
    return Dataset(features=X, targets=predict_batch(planted, X)), planted


class TestInitPrototypes:
    def test_full_draw_is_permutation(self, rng):
        data = Dataset(features=rng.normal(0, 1, (8, 2)), targets=rng.normal(0, 1, 8))
        picked = init_prototypes(data, 8, seed=3)
        got = {tuple(row) for row in picked}
        expected = {tuple(row) for row in data.features}
        assert got == expected

    def test_single_row(self, rng):
        data = Dataset(features=rng.normal(0, 1, (5, 3)), targets=rng.normal(0, 1, 5))
        picked = init_prototypes(data, 1, seed=0)
        assert picked.shape == (1, 3)
        assert any(np.array_equal(picked[0], row) for row in data.features)

    def test_seed_determinism(self, rng):
        data = Dataset(features=rng.normal(0, 1, (30, 2)), targets=rng.normal(0, 1, 30))
        a = init_prototypes(data, 5, seed=11)
        b = init_prototypes(data, 5, seed=11)
        np.testing.assert_array_equal(a, b)

    def test_rows_distinct(self, rng):
        X = rng.normal(0, 1, (30, 2))
        data = Dataset(features=X, targets=rng.normal(0, 1, 30))
        picked = init_prototypes(data, 10, seed=2)
        assert len({tuple(r) for r in picked}) == 10

    def test_stratified_for_labels(self):
        rng = np.random.default_rng(0)
        X = rng.normal(0, 1, (20, 2))
        y = np.concatenate([np.ones(19), [-1.0]])  # heavily imbalanced
        data = Dataset(features=X, targets=y)
        for seed in range(20):
            picked = init_prototypes(data, 2, seed=seed)
            labels = set()
            for row in picked:
                idx = np.flatnonzero((X == row).all(axis=1))[0]
                labels.add(y[idx])
            assert labels == {-1.0, 1.0}

    def test_m_out_of_range(self, rng):
        data = Dataset(features=rng.normal(0, 1, (4, 2)), targets=rng.normal(0, 1, 4))
        with pytest.raises(ValueError):
            init_prototypes(data, 5, seed=0)
        with pytest.raises(ValueError):
            init_prototypes(data, 0, seed=0)


class TestFit:
    def test_planted_model_converges_with_tiny_movement(self):
        protos = np.array([[0.0, 0.0], [2.0, 1.0]])
        data, planted = planted_dataset(1, protos, [1.0, -1.5], 0.2)
        config = TrainConfig(lam=0.0, eta=0.1, penalty_enabled=False, epsilon=1e-12)
        model, trace = fit(data, 2, config=config, init=protos, similarity=RBF1)
        assert trace.termination == "converged"
        assert trace.final_objective <= 1e-16
        assert np.max(np.abs(model.prototypes - protos)) < 1e-6

    def test_coefficient_step_never_increases_objective(self):
        for seed in range(5):
            data = Dataset(
                features=np.random.default_rng(seed).normal(0, 1, (20, 2)),
                targets=np.random.default_rng(seed + 50).normal(0, 1, 20),
            )
            for penalty in (True, False):
                config = TrainConfig(seed=seed, eta=0.1, penalty_enabled=penalty, max_sweeps=10)
                _, trace = fit(data, 3, config=config, similarity=RBF1)
                for rec in trace.records:
                    assert rec.omega_after <= rec.omega_before + 1e-12

    def test_round_robin_fairness(self, rng):
        data = Dataset(features=rng.normal(0, 1, (15, 2)), targets=rng.normal(0, 1, 15))
        config = TrainConfig(seed=0, eta=0.05, max_sweeps=4, epsilon=1e-15)
        _, trace = fit(data, 3, config=config, similarity=RBF1)
        visits = [rec.j for rec in trace.records]
        for start in range(0, len(visits) - 2, 3):
            assert sorted(visits[start : start + 3]) == [0, 1, 2]

    def test_huge_epsilon_stops_after_first_sweep(self, rng):
        data = Dataset(features=rng.normal(0, 1, (12, 2)), targets=rng.normal(0, 1, 12))
        config = TrainConfig(seed=0, epsilon=1e9, max_sweeps=50)
        _, trace = fit(data, 2, config=config, similarity=RBF1)
        assert trace.termination == "converged"
        assert len(trace.records) == 2

    def test_trace_bounded_by_sweep_budget(self, rng):
        data = Dataset(features=rng.normal(0, 1, (12, 2)), targets=rng.normal(0, 1, 12))
        config = TrainConfig(seed=0, epsilon=1e-300, max_sweeps=7)
        _, trace = fit(data, 3, config=config, similarity=RBF1)
        assert trace.termination == "max_sweeps"
        assert len(trace.records) == 7 * 3

    def test_seeded_runs_bitwise_reproducible(self, rng):
        data = Dataset(features=rng.normal(0, 1, (18, 3)), targets=rng.normal(0, 1, 18))
        config = TrainConfig(seed=9, eta=0.1, max_sweeps=10)
        m1, t1 = fit(data, 4, config=config, similarity=RBF1)
        m2, t2 = fit(data, 4, config=config, similarity=RBF1)
        np.testing.assert_array_equal(m1.prototypes, m2.prototypes)
        np.testing.assert_array_equal(m1.beta, m2.beta)
        assert m1.bias == m2.bias
        assert [r.omega_after for r in t1.records] == [r.omega_after for r in t2.records]

    def test_error_recorded_with_partial_model(self, monkeypatch, rng):
        import sparsim.training as training
        from sparsim.errors import SingularSystemError

        data = Dataset(features=rng.normal(0, 1, (10, 2)), targets=rng.normal(0, 1, 10))
        calls = {"n": 0}
        real = training.ridge.solve

        def failing(system):
            calls["n"] += 1
            if calls["n"] >= 4:
                raise SingularSystemError("synthetic failure")
            return real(system)

        monkeypatch.setattr(training.ridge, "solve", failing)
        model, trace = fit(data, 2, config=TrainConfig(seed=0, max_sweeps=10), similarity=RBF1)
        assert trace.termination == "error"
        assert "synthetic failure" in trace.error
        assert model.m == 2
        assert np.all(np.isfinite(model.prototypes))

    def test_metadata_provenance(self, rng):
        data = Dataset(features=rng.normal(0, 1, (10, 2)), targets=rng.normal(0, 1, 10))
        config = TrainConfig(seed=4, lam=1e-4, max_sweeps=3)
        model, trace = fit(data, 2, config=config, similarity=RBF1)
        assert model.metadata["lam"] == 1e-4
        assert model.metadata["seed"] == 4
        assert model.metadata["iterations"] == len(trace.records)
        assert model.metadata["objective"] == trace.final_objective

    def test_default_similarity_is_rbf_inverse_dim(self, rng):
        data = Dataset(features=rng.normal(0, 1, (10, 4)), targets=rng.normal(0, 1, 10))
        model, _ = fit(data, 2, config=TrainConfig(max_sweeps=1))
        assert model.similarity.kind == "rbf"
        assert model.similarity.gamma == 0.25


class TestDistill:
    def test_student_at_teacher_fixed_point(self, rng):
        protos = np.array([[0.0, 0.0], [1.5, -0.5], [-1.0, 1.0]])
        teacher = SparseModel(prototypes=protos, beta=[1.0, -0.7, 0.4], bias=0.1, similarity=RBF1)
        X = rng.normal(0, 1, (25, 2))
        X[:3] = protos
        scores = predict_batch(teacher, X)
        config = TrainConfig(lam=0.0, eta=0.1, penalty_enabled=False, epsilon=1e-13)
        student = distill(X, scores, 3, config=config, similarity=RBF1, init=protos)
        probe = rng.normal(0, 1, (50, 2))
        np.testing.assert_allclose(
            predict_batch(student, probe), predict_batch(teacher, probe), atol=1e-6
        )

    def test_zero_teacher_gives_zero_model(self, rng):
        X = rng.normal(0, 1, (15, 2))
        student = distill(X, np.zeros(15), 2, config=TrainConfig(lam=1e-3), similarity=RBF1)
        np.testing.assert_allclose(student.beta, 0.0, atol=1e-9)
        assert student.bias == pytest.approx(0.0, abs=1e-9)

    def test_rejects_nonfinite_scores(self, rng):
        with pytest.raises(ValueError):
            distill(rng.normal(0, 1, (5, 2)), [1.0, np.nan, 0.0, 0.0, 1.0], 2)
