import filecmp
import json
import os

import pytest

from painreg._common import DomainError, derive_seed
from painreg.crossval import make_loso_folds, run_loso, write_loso_outputs
from painreg.data import generate_synthetic
from painreg.losses import LossConfig
from painreg.model import TrainConfig

FAST = TrainConfig(iterations=25, log_every=5, learning_rate=1e-3)
DIVERGING = TrainConfig(
    learning_rate=1e30, iterations=50, activation="identity",
    loss=LossConfig(center_weight=1.0, center_norm="l2"),
)


class TestFolds:
    def test_partition(self, small_synth):
        folds = make_loso_folds(small_synth)
        assert [f.held_out_subject for f in folds] == ["S1", "S2", "S3"]
        for fold in folds:
            assert not set(fold.train_positions) & set(fold.test_positions)
            assert len(fold.train_positions) + len(fold.test_positions) == len(small_synth)
            assert {small_synth[p].subject_id for p in fold.test_positions} == {fold.held_out_subject}
        held = sorted(p for f in folds for p in f.test_positions)
        assert held == list(range(len(small_synth)))

    def test_needs_two_subjects(self):
        with pytest.raises(DomainError):
            make_loso_folds(generate_synthetic(1, 12, 3, 1.0, seed=0))


class TestRunLoso:
    def test_predicts_every_frame_once(self, small_synth):
        result = run_loso(small_synth, FAST)
        keys = [(p.subject_id, p.sequence_id, p.frame_index) for p in result.predictions]
        assert sorted(keys) == sorted(s.key for s in small_synth)
        assert result.aggregate.num_frames == len(small_synth)
        assert result.baseline.wmae == pytest.approx(2.5)
        assert not result.failures

    def test_fold_seeds(self, small_synth):
        result = run_loso(small_synth, FAST)
        for fold in result.folds:
            assert fold.seed == derive_seed(FAST.seed, fold.subject)
            assert fold.model.config.seed == fold.seed

    def test_held_out_frames_are_not_deduplicated(self, make_dataset):
        ds = make_dataset({("A", "A1"): [0] * 20 + [2] * 4, ("B", "B1"): [1] * 20 + [3] * 4})
        result = run_loso(ds, FAST, dedup_train=True, run_threshold=5)
        by_subject = {f.subject: f for f in result.folds}
        assert len(by_subject["A"].predictions) == 24
        assert by_subject["A"].train_size == 1 + 4

    def test_workers_do_not_change_results(self, small_synth):
        serial = run_loso(small_synth, FAST, workers=1)
        threaded = run_loso(small_synth, FAST, workers=3)
        assert serial.aggregate_dict() == threaded.aggregate_dict()
        assert [p.prediction for p in serial.predictions] == [p.prediction for p in threaded.predictions]

    def test_fold_missing_a_class_still_trains(self, make_dataset):
        ds = make_dataset({("A", "A1"): list(range(5)), ("B", "B1"): list(range(5)), ("C", "C1"): list(range(6))})
        result = run_loso(ds, TrainConfig(iterations=10), dedup_train=False)
        assert not result.failures
        assert len(result.predictions) == 16
        assert all(f.report is not None for f in result.folds)

    def test_diverged_folds_are_reported(self, small_synth):
        result = run_loso(small_synth, DIVERGING)
        assert len(result.failures) == 3
        assert result.aggregate is None
        assert "fold S1" in result.failures[0].error
        assert all(f.diverged for f in result.failures)
        data = result.aggregate_dict()
        assert [f["subject"] for f in data["failed_folds"]] == ["S1", "S2", "S3"]


def test_outputs_are_reproducible(small_synth, tmp_path):
    a = write_loso_outputs(run_loso(small_synth, FAST), str(tmp_path / "a"))
    b = write_loso_outputs(run_loso(small_synth, FAST), str(tmp_path / "b"))
    files = ["aggregate_metrics.json", "predictions.csv"] + [
        os.path.join(f"fold_{s}", name) for s in ("S1", "S2", "S3") for name in ("checkpoint.json", "metrics.json")
    ]
    for name in files:
        assert filecmp.cmp(os.path.join(a, name), os.path.join(b, name), shallow=False), name
    with open(os.path.join(a, "aggregate_metrics.json"), encoding="utf-8") as f:
        data = json.load(f)
    assert data["primary"] == "pooled"
    assert data["config"]["train"]["iterations"] == 25
    assert set(data["fold_mean"]) == {"mae", "mse", "pcc", "wmae", "wmse"}


@pytest.mark.slow
def test_end_to_end_beats_zero_baseline():
    data = generate_synthetic(5, 200, 32, 1.0, seed=0)
    result = run_loso(data, TrainConfig())
    assert result.aggregate.wmae < 0.5
    assert result.aggregate.wmae < result.baseline.wmae


@pytest.mark.slow
def test_wmae_grows_with_noise():
    scores = []
    for sigma in (0.5, 1.0, 2.0):
        data = generate_synthetic(5, 200, 32, sigma, seed=0)
        scores.append(run_loso(data, TrainConfig()).aggregate.wmae)
    assert scores[0] < scores[2]


def test_partition_on_random_datasets(make_dataset, rng):
    for trial in range(20):
        layout = {}
        for s in range(int(rng.integers(2, 6))):
            for q in range(int(rng.integers(1, 3))):
                layout[(f"P{s}", f"P{s}_{q}")] = rng.integers(0, 6, int(rng.integers(1, 8))).tolist()
        ds = make_dataset(layout, seed=trial)
        folds = make_loso_folds(ds)
        appearances = [p for f in folds for p in f.test_positions]
        assert sorted(appearances) == list(range(len(ds)))
        for fold in folds:
            assert set(fold.train_positions) | set(fold.test_positions) == set(range(len(ds)))
            assert not set(fold.train_positions) & set(fold.test_positions)


@pytest.mark.slow
def test_center_loss_helps_on_imbalanced_data():
    wins = 0
    for seed in range(10):
        data = generate_synthetic(5, 200, 32, 1.0, seed=seed, profile="imbalanced")
        scores = []
        for weight in (0.01, 0.0):
            config = TrainConfig(seed=seed, loss=LossConfig(center_weight=weight))
            scores.append(run_loso(data, config).aggregate.wmae)
        wins += scores[0] < scores[1]
    assert wins >= 7
