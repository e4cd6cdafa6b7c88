import numpy as np
import pytest

from painreg._common import EmptyDatasetError, ShapeError
from painreg.baselines import (
    all_zeros_predictor,
    analytic_noise_floor,
    compactness_diagnostic,
    linear_least_squares_oracle,
)
from painreg.data import generate_synthetic
from painreg.losses import LossConfig
from painreg.metrics import evaluate, label_predictions
from painreg.model import TrainConfig, train


def test_all_zeros_on_balanced_synthetic(small_synth):
    preds = all_zeros_predictor(small_synth)
    assert preds == [0.0] * len(small_synth)
    report = evaluate(label_predictions(small_synth.samples, preds))
    assert report.wmae == pytest.approx(2.5)
    assert report.wmse == pytest.approx(55 / 6)
    assert report.pcc is None


class TestOracle:
    def test_noise_free_recovers_labels(self):
        train_set = generate_synthetic(3, 30, 8, 0.0, seed=0)
        test_set = generate_synthetic(2, 12, 8, 0.0, seed=1)
        preds = linear_least_squares_oracle(train_set, test_set)
        np.testing.assert_allclose(preds, test_set.labels, atol=1e-3)

    def test_predictions_clamped(self):
        train_set = generate_synthetic(3, 30, 8, 2.0, seed=0)
        test_set = generate_synthetic(2, 60, 8, 2.0, seed=1)
        preds = np.array(linear_least_squares_oracle(train_set, test_set))
        assert preds.min() >= 0.0 and preds.max() <= 5.0

    def test_near_noise_floor(self):
        train_set = generate_synthetic(5, 600, 8, 1.0, seed=0)
        test_set = generate_synthetic(3, 600, 8, 1.0, seed=1)
        preds = linear_least_squares_oracle(train_set, test_set)
        report = evaluate(label_predictions(test_set.samples, preds), aggregation="pooled")
        assert report.mae < 1.1 * analytic_noise_floor(1.0, 4.0)

    def test_single_training_frame_predicts_its_label(self, make_dataset):
        train_set = make_dataset({("A", "A1"): [3]}, feature_dim=4)
        test_set = make_dataset({("B", "B1"): [0, 1, 5, 2]}, feature_dim=4, seed=1)
        np.testing.assert_allclose(linear_least_squares_oracle(train_set, test_set), [3.0] * 4, atol=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            linear_least_squares_oracle(
                generate_synthetic(2, 12, 3, 1.0, seed=0), generate_synthetic(2, 12, 4, 1.0, seed=0)
            )

    def test_empty_train(self, small_synth):
        with pytest.raises(EmptyDatasetError):
            linear_least_squares_oracle(small_synth.subset([]), small_synth)


def test_noise_floor_values():
    assert analytic_noise_floor(0.0) == 0.0
    expected = 0.25 * np.sqrt(2 / np.pi) * 5 / 6
    assert analytic_noise_floor(1.0, 4.0) == pytest.approx(expected)


class TestCompactness:
    def test_report_shape(self, small_synth):
        model = train(small_synth, TrainConfig(iterations=20))
        report = compactness_diagnostic(model, small_synth)
        assert report.counts == [12] * 6
        assert all(v >= 0 for v in report.per_class)
        assert report.overall == pytest.approx(np.mean(report.per_class))
        assert set(report.to_dict()["per_class"]) == {"0", "1", "2", "3", "4", "5"}

    def test_order_does_not_matter(self, small_synth, rng):
        model = train(small_synth, TrainConfig(iterations=20))
        shuffled = small_synth.subset(rng.permutation(len(small_synth)).tolist())
        a = compactness_diagnostic(model, small_synth)
        b = compactness_diagnostic(model, shuffled)
        assert b.counts == a.counts
        np.testing.assert_allclose(b.per_class, a.per_class, rtol=1e-12)
        assert b.overall == pytest.approx(a.overall, rel=1e-12)

    def test_missing_class_is_none(self, make_dataset):
        ds = make_dataset({("A", "A1"): [0, 0, 3, 3]})
        model = train(ds, TrainConfig(iterations=5, batch_size=4))
        report = compactness_diagnostic(model, ds)
        assert report.per_class[1] is None
        assert report.counts == [2, 0, 0, 2, 0, 0]

    @pytest.mark.slow
    def test_center_loss_tightens_clusters(self):
        data = generate_synthetic(4, 300, 16, 1.0, seed=0)
        tighter = 0
        for seed in range(10):
            scores = []
            for weight in (0.01, 0.0):
                config = TrainConfig(
                    seed=seed, iterations=3000, learning_rate=1e-3,
                    loss=LossConfig(center_weight=weight, center_norm="l2"),
                )
                scores.append(compactness_diagnostic(train(data, config), data).overall)
            tighter += scores[0] < scores[1]
        assert tighter >= 7
