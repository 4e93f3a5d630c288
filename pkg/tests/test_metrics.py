import csv

import numpy as np
import pytest

from sparsim import SparseModel
from sparsim.metrics import (
    OperatingPoint,
    error_rate,
    eval_cost,
    far_frr_curve,
    mae,
    mse,
    write_far_frr_csv,
)
from sparsim.similarity import EVAL_COUNTER, SimilaritySpec
from sparsim.datatypes import predict_batch

RBF1 = SimilaritySpec(kind="rbf", gamma=1.0)


class TestPointwise:
    def test_mae_zero_on_equal(self, rng):
        x = rng.normal(0, 1, 20)
        assert mae(x, x) == 0.0

    def test_mae_constant_shift(self, rng):
        x = rng.normal(0, 1, 20)
        assert mae(x + 1.5, x) == pytest.approx(1.5, rel=1e-14)

    def test_against_loop_oracles(self, rng):
        pred = rng.normal(0, 1, 31)
        truth = rng.normal(0, 1, 31)
        mae_oracle = sum(abs(p - t) for p, t in zip(pred, truth)) / 31
        mse_oracle = sum((p - t) ** 2 for p, t in zip(pred, truth)) / 31
        assert mae(pred, truth) == pytest.approx(mae_oracle, rel=1e-12)
        assert mse(pred, truth) == pytest.approx(mse_oracle, rel=1e-12)

    def test_error_rate_ties_accept(self):
        assert error_rate([0.0, -0.1, 0.2], [1.0, -1.0, -1.0]) == pytest.approx(1 / 3)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mae([1.0], [1.0, 2.0])


class TestFarFrrCurve:
    def test_endpoints(self, rng):
        points = far_frr_curve(rng.normal(1, 1, 10), rng.normal(-1, 1, 10))
        assert points[0].threshold == -np.inf
        assert points[0].far == 1.0 and points[0].frr == 0.0
        assert points[-1].threshold == np.inf
        assert points[-1].far == 0.0 and points[-1].frr == 1.0

    def test_monotonicity(self, rng):
        for _ in range(10):
            genuine = rng.normal(0.5, 1, int(rng.integers(3, 30)))
            impostor = rng.normal(-0.5, 1, int(rng.integers(3, 30)))
            points = far_frr_curve(genuine, impostor)
            fars = [p.far for p in points]
            frrs = [p.frr for p in points]
            assert all(a >= b for a, b in zip(fars, fars[1:]))
            assert all(a <= b for a, b in zip(frrs, frrs[1:]))
            assert all(0 <= p.far <= 1 and 0 <= p.frr <= 1 for p in points)

    def test_separated_scores_reach_zero_zero(self):
        points = far_frr_curve([2.0, 3.0, 4.0], [-1.0, 0.0, 1.0])
        assert any(p.far == 0.0 and p.frr == 0.0 for p in points)

    def test_identical_distributions_sum_to_one(self, rng):
        scores = rng.normal(0, 1, 20)
        for p in far_frr_curve(scores, scores.copy()):
            assert p.far + p.frr == 1.0

    def test_one_point_per_distinct_score_plus_endpoints(self):
        points = far_frr_curve([1.0, 1.0, 2.0], [0.0, 2.0])
        # distinct scores {0, 1, 2} plus two infinite endpoints
        assert len(points) == 5

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            far_frr_curve([], [1.0])

    def test_csv_export(self, tmp_path, rng):
        points = far_frr_curve(rng.normal(1, 1, 5), rng.normal(-1, 1, 5))
        path = tmp_path / "curve.csv"
        write_far_frr_csv(points, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["threshold", "far", "frr"]
        assert len(rows) == len(points) + 1
        assert float(rows[1][1]) == points[0].far


class TestEvalCost:
    def test_cost_equals_prototype_count(self, rng):
        for m in (1, 2, 5, 10):
            model = SparseModel(
                prototypes=rng.normal(0, 1, (m, 3)),
                beta=rng.normal(0, 1, m),
                bias=0.0,
                similarity=RBF1,
            )
            assert eval_cost(model) == m

    def test_batch_additivity(self, rng):
        model = SparseModel(
            prototypes=rng.normal(0, 1, (4, 2)), beta=np.ones(4), bias=0.0, similarity=RBF1
        )
        before = EVAL_COUNTER.read()
        predict_batch(model, rng.normal(0, 1, (9, 2)))
        assert EVAL_COUNTER.read() - before == 36
