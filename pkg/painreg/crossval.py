"""
Leave-one-subject-out cross-validation.

Each fold trains a fresh head on every other subject (optionally de-duplicated)
and predicts the held-out subject's untouched frames. Fold seeds come from
(base seed, subject id), so folds are independent of each other and of their
execution order.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ._common import DivergenceError, DomainError, PainRegError, derive_seed
from .baselines import all_zeros_predictor
from .data import deduplicate
from .metrics import evaluate, label_predictions, write_predictions_csv
from .model import predict, save_checkpoint, train
from .utils import save_json

logger = logging.getLogger("painreg.crossval")

_SUMMARY_KEYS = ("mae", "mse", "pcc", "wmae", "wmse")


@dataclass(frozen=True)
class FoldSpec:
    held_out_subject: str
    train_positions: tuple
    test_positions: tuple


def make_loso_folds(dataset):
    """One fold per distinct subject, ordered by subject id."""
    subjects = dataset.subjects()
    if len(subjects) < 2:
        raise DomainError(f"leave-one-subject-out needs >= 2 subjects, found {len(subjects)}")
    by_subject = np.array([s.subject_id for s in dataset.samples], dtype=object)
    folds = []
    for subject in subjects:
        held = by_subject == subject
        folds.append(
            FoldSpec(
                held_out_subject=subject,
                train_positions=tuple(np.flatnonzero(~held).tolist()),
                test_positions=tuple(np.flatnonzero(held).tolist()),
            )
        )
    return folds


@dataclass(eq=False)
class FoldResult:
    spec: FoldSpec
    seed: int
    train_size: int
    model: Optional[object] = None
    report: Optional[object] = None
    predictions: list = field(default_factory=list)
    error: Optional[str] = None
    diverged: bool = False

    @property
    def subject(self):
        return self.spec.held_out_subject


@dataclass(eq=False)
class LosoResult:
    folds: list
    aggregate: Optional[object]
    baseline: Optional[object]
    fold_mean: dict
    predictions: list
    config: dict

    @property
    def failures(self):
        return [f for f in self.folds if f.error is not None]

    def aggregate_dict(self):
        return {
            "primary": "pooled",
            "pooled": self.aggregate.to_dict() if self.aggregate else None,
            "fold_mean": self.fold_mean,
            "baselines": {"all_zeros": self.baseline.to_dict() if self.baseline else None},
            "failed_folds": [{"subject": f.subject, "error": f.error, "diverged": f.diverged} for f in self.failures],
            "config": self.config,
        }


def _run_fold(dataset, spec, train_config, dedup_train, run_threshold, position, total):
    seed = derive_seed(train_config.seed, spec.held_out_subject)
    train_set = dataset.subset(spec.train_positions)
    if dedup_train:
        train_set = deduplicate(train_set, run_threshold)
    test_set = dataset.subset(spec.test_positions)
    result = FoldResult(spec=spec, seed=seed, train_size=len(train_set))
    logger.info(
        "Processing fold %d/%d: subject %s (%d train / %d test frames)",
        position, total, spec.held_out_subject, len(train_set), len(test_set),
    )
    missing = [k for k, n in enumerate(train_set.class_counts()) if n == 0]
    if missing:
        logger.warning("fold %s: training split lacks classes %s", spec.held_out_subject, missing)
    try:
        result.model = train(train_set, replace(train_config, seed=seed))
    except DivergenceError as e:
        logger.exception("fold %s diverged", spec.held_out_subject)
        result.diverged = True
        result.error = str(DivergenceError(e.iteration, fold=spec.held_out_subject))
        return result
    except PainRegError as e:
        logger.exception("fold %s failed", spec.held_out_subject)
        result.error = f"fold {spec.held_out_subject}: {e}"
        return result
    result.predictions = label_predictions(test_set.samples, predict(result.model, test_set))
    result.report = evaluate(result.predictions, dataset.num_classes)
    return result


def _fold_mean(reports):
    out = {}
    for key in _SUMMARY_KEYS:
        values = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        out[key] = float(np.mean(values)) if values else None
    return out


def run_loso(dataset, train_config, dedup_train=True, run_threshold=5, workers=1):
    """
    Train and evaluate one model per held-out subject. Diverged folds are
    recorded in the result and left out of the aggregate.
    """
    folds = make_loso_folds(dataset)
    total = len(folds)
    workers = max(1, int(workers))
    logger.info("run_loso: %d folds, dedup_train=%s, workers=%d", total, dedup_train, workers)

    def job(item):
        position, spec = item
        return _run_fold(dataset, spec, train_config, dedup_train, run_threshold, position, total)

    items = list(enumerate(folds, start=1))
    if workers == 1:
        results = []
        for item in items:
            results.append(job(item))
            done = sum(1 for r in results if r.error is None)
            logger.info("Fold progress: %d done / %d processed / %d total", done, len(results), total)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, items))

    ok = [r for r in results if r.error is None]
    predictions = [p for r in ok for p in r.predictions]
    aggregate = evaluate(predictions, dataset.num_classes) if predictions else None
    baseline = None
    if predictions:
        zeros = all_zeros_predictor(predictions)
        baseline = evaluate(
            [replace(p, prediction=z) for p, z in zip(predictions, zeros)], dataset.num_classes
        )
    config = {
        "train": train_config.to_dict(),
        "dedup_train": bool(dedup_train),
        "run_threshold": int(run_threshold),
        "num_folds": total,
    }
    for failed in (r for r in results if r.error is not None):
        logger.error("fold %s failed: %s", failed.subject, failed.error)
    return LosoResult(
        folds=results,
        aggregate=aggregate,
        baseline=baseline,
        fold_mean=_fold_mean([r.report for r in ok]),
        predictions=predictions,
        config=config,
    )


def write_loso_outputs(result, out_dir):
    """fold_<subject>/{checkpoint,metrics}.json, aggregate_metrics.json, predictions.csv."""
    for fold in result.folds:
        fold_dir = os.path.join(out_dir, f"fold_{fold.subject}")
        if fold.model is not None:
            save_checkpoint(fold.model, os.path.join(fold_dir, "checkpoint.json"))
        metrics = {
            "subject": fold.subject,
            "seed": fold.seed,
            "train_frames": fold.train_size,
            "test_frames": len(fold.spec.test_positions),
            "error": fold.error,
            "metrics": fold.report.to_dict() if fold.report else None,
            "config": result.config,
        }
        save_json(metrics, os.path.join(fold_dir, "metrics.json"))
    save_json(result.aggregate_dict(), os.path.join(out_dir, "aggregate_metrics.json"))
    write_predictions_csv(result.predictions, os.path.join(out_dir, "predictions.csv"))
    return out_dir
