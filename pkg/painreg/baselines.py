"""Reference predictors and the hidden-feature compactness diagnostic."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._common import NUM_CLASSES, OUTPUT_SCALE, EmptyDatasetError, NumericDomainError, ShapeError
from .model import hidden_features

logger = logging.getLogger("painreg.baselines")

ORACLE_RIDGE = 1e-8


def all_zeros_predictor(samples):
    return [0.0] * len(samples)


def linear_least_squares_oracle(train, test, ridge=ORACLE_RIDGE, clamp=(0.0, OUTPUT_SCALE)):
    """
    Fit label ~ A . features + c on `train` (ridge on A only, intercept free)
    and predict `test`, clamped to [0, 5].
    """
    if len(train) == 0:
        raise EmptyDatasetError("oracle needs a non-empty training set")
    if len(test) == 0:
        return []
    if train.feature_dim != test.feature_dim:
        raise ShapeError(f"train D={train.feature_dim} but test D={test.feature_dim}")

    X = train.features
    y = train.labels.astype(float)
    mean_x = X.mean(axis=0)
    mean_y = y.mean()
    Xc = X - mean_x
    # ridge solution via the augmented system [Xc; sqrt(r) I] A = [y - mean; 0]
    augmented = np.vstack([Xc, np.sqrt(ridge) * np.eye(X.shape[1])])
    target = np.concatenate([y - mean_y, np.zeros(X.shape[1])])
    try:
        coef, *_ = np.linalg.lstsq(augmented, target, rcond=None)
    except np.linalg.LinAlgError as e:
        raise NumericDomainError(f"least-squares oracle failed: {e}") from e
    if not np.all(np.isfinite(coef)):
        raise NumericDomainError("least-squares oracle produced non-finite coefficients")
    intercept = mean_y - mean_x @ coef
    preds = np.clip(test.features @ coef + intercept, clamp[0], clamp[1])
    return preds.tolist()


def analytic_noise_floor(noise_sigma, anchor_spacing=4.0, num_classes=NUM_CLASSES):
    """
    Expected MAE of the exact linear readout on balanced synthetic data: errors
    are N(0, (sigma / spacing)^2), and the clamp halves them for the two edge classes.
    """
    scale = noise_sigma / anchor_spacing
    full = scale * np.sqrt(2.0 / np.pi)
    if num_classes == 1:
        return full / 2.0
    return full * (num_classes - 1) / num_classes


@dataclass(frozen=True)
class CompactnessReport:
    per_class: list
    counts: list
    overall: float

    def to_dict(self):
        return {
            "per_class": {str(k): v for k, v in enumerate(self.per_class)},
            "counts": {str(k): n for k, n in enumerate(self.counts)},
            "overall": self.overall,
        }


def compactness_diagnostic(model, dataset):
    """Mean l2 distance of Eval-mode hidden features to their post-hoc class mean."""
    if len(dataset) == 0:
        raise EmptyDatasetError("compactness needs a non-empty dataset")
    hidden = hidden_features(model, dataset)
    labels = dataset.labels
    per_class, counts = [], []
    for k in range(dataset.num_classes):
        members = hidden[labels == k]
        counts.append(int(len(members)))
        if not len(members):
            per_class.append(None)
            continue
        dist = np.linalg.norm(members - members.mean(axis=0), axis=1)
        per_class.append(float(dist.mean()))
    present = [v for v in per_class if v is not None]
    return CompactnessReport(per_class=per_class, counts=counts, overall=float(np.mean(present)))
