"""
Evaluation metrics.

MAE/MSE default to the mean of per-sequence values; PCC is computed within
each sequence and averaged over sequences with nonzero variance on both sides.
wMAE/wMSE pool all frames, group them by ground-truth class and average the
per-class values over the classes present.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
from scipy.stats import pearsonr

from ._common import NUM_CLASSES, DomainError, NumericDomainError, ShapeError
from .utils import none_if_nan, save_frame

logger = logging.getLogger("painreg.metrics")

PREDICTION_COLUMNS = ["subject_id", "sequence_id", "frame_index", "label", "prediction"]
_SEQUENCE = ["subject_id", "sequence_id"]


class Aggregation(str, Enum):
    PER_SEQUENCE = "per_sequence"
    POOLED = "pooled"


@dataclass(frozen=True)
class LabeledPrediction:
    subject_id: str
    sequence_id: str
    frame_index: int
    prediction: float
    label: int

    def __post_init__(self):
        if not np.isfinite(self.prediction):
            raise NumericDomainError(f"non-finite prediction for frame {self.frame_index}")
        object.__setattr__(self, "prediction", float(self.prediction))
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "frame_index", int(self.frame_index))


def label_predictions(samples, predictions):
    if len(samples) != len(predictions):
        raise ShapeError(f"{len(predictions)} predictions for {len(samples)} samples")
    return [
        LabeledPrediction(s.subject_id, s.sequence_id, s.frame_index, p, s.label)
        for s, p in zip(samples, predictions)
    ]


def _frame(preds):
    if len(preds) == 0:
        raise DomainError("metrics need at least one prediction")
    df = predictions_frame(preds)
    err = df["prediction"] - df["label"]
    df["abs_error"] = err.abs()
    df["sq_error"] = err ** 2
    return df


def _aggregate(df, column, aggregation):
    if Aggregation(aggregation) is Aggregation.POOLED:
        return float(df[column].mean())
    return float(df.groupby(_SEQUENCE, sort=True)[column].mean().mean())


def mae(preds, aggregation=Aggregation.PER_SEQUENCE):
    return _aggregate(_frame(preds), "abs_error", aggregation)


def mse(preds, aggregation=Aggregation.PER_SEQUENCE):
    return _aggregate(_frame(preds), "sq_error", aggregation)


@dataclass(frozen=True)
class PccResult:
    value: Optional[float]
    excluded_count: int
    per_sequence: dict = field(default_factory=dict)


def _sequence_pcc(prediction, label):
    if len(prediction) < 2 or np.ptp(prediction) == 0 or np.ptp(label) == 0:
        return None
    return float(pearsonr(prediction, label)[0])


def _pcc_from_frame(df):
    per_sequence = {}
    for key, group in df.groupby(_SEQUENCE, sort=True):
        per_sequence[tuple(key)] = _sequence_pcc(
            group["prediction"].to_numpy(dtype=float), group["label"].to_numpy(dtype=float)
        )
    defined = [v for v in per_sequence.values() if v is not None]
    excluded = len(per_sequence) - len(defined)
    value = float(np.mean(defined)) if defined else None
    return PccResult(value=value, excluded_count=excluded, per_sequence=per_sequence)


def pcc(preds):
    """Mean within-sequence Pearson correlation; value is None when every sequence is excluded."""
    return _pcc_from_frame(_frame(preds))


@dataclass(frozen=True)
class WeightedMetrics:
    wmae: float
    wmse: float
    per_class_mae: list
    per_class_mse: list
    per_class_count: list
    missing_classes: list


def _weighted_from_frame(df, num_classes):
    if df["label"].min() < 0 or df["label"].max() >= num_classes:
        raise DomainError(f"labels must lie in [0, {num_classes - 1}]")
    grouped = df.groupby("label", sort=True)
    class_mae = grouped["abs_error"].mean()
    class_mse = grouped["sq_error"].mean()
    counts = grouped.size()
    per_mae = [float(class_mae[k]) if k in class_mae.index else None for k in range(num_classes)]
    per_mse = [float(class_mse[k]) if k in class_mse.index else None for k in range(num_classes)]
    per_count = [int(counts[k]) if k in counts.index else 0 for k in range(num_classes)]
    present = [k for k in range(num_classes) if per_mae[k] is not None]
    return WeightedMetrics(
        wmae=float(np.mean([per_mae[k] for k in present])),
        wmse=float(np.mean([per_mse[k] for k in present])),
        per_class_mae=per_mae,
        per_class_mse=per_mse,
        per_class_count=per_count,
        missing_classes=[k for k in range(num_classes) if per_mae[k] is None],
    )


def weighted_metrics(preds, num_classes=NUM_CLASSES):
    return _weighted_from_frame(_frame(preds), num_classes)


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    mse: float
    pcc: Optional[float]
    pcc_excluded_count: int
    wmae: float
    wmse: float
    per_class_mae: list
    per_class_mse: list
    per_class_count: list
    missing_classes: list
    per_sequence: list
    aggregation: Aggregation
    num_frames: int

    def to_dict(self):
        return {
            "mae": self.mae,
            "mse": self.mse,
            "pcc": none_if_nan(self.pcc),
            "pcc_excluded_count": self.pcc_excluded_count,
            "wmae": self.wmae,
            "wmse": self.wmse,
            "per_class_mae": [none_if_nan(v) for v in self.per_class_mae],
            "per_class_mse": [none_if_nan(v) for v in self.per_class_mse],
            "per_class_count": list(self.per_class_count),
            "missing_classes": list(self.missing_classes),
            "aggregation": Aggregation(self.aggregation).value,
            "num_frames": self.num_frames,
            "per_sequence": self.per_sequence,
        }


def evaluate(preds, num_classes=NUM_CLASSES, aggregation=Aggregation.PER_SEQUENCE):
    """Full report: unweighted, weighted and per-sequence breakdowns."""
    df = _frame(preds)
    correlation = _pcc_from_frame(df)
    weighted = _weighted_from_frame(df, num_classes)

    seq = df.groupby(_SEQUENCE, sort=True).agg(
        frames=("label", "size"), mae=("abs_error", "mean"), mse=("sq_error", "mean")
    )
    per_sequence = [
        {
            "subject_id": subject,
            "sequence_id": sequence,
            "frames": int(row.frames),
            "mae": float(row.mae),
            "mse": float(row.mse),
            "pcc": correlation.per_sequence[(subject, sequence)],
        }
        for (subject, sequence), row in seq.iterrows()
    ]
    if correlation.value is None:
        logger.info("PCC undefined: all %d sequences have zero variance", correlation.excluded_count)
    return MetricsReport(
        mae=_aggregate(df, "abs_error", aggregation),
        mse=_aggregate(df, "sq_error", aggregation),
        pcc=correlation.value,
        pcc_excluded_count=correlation.excluded_count,
        wmae=weighted.wmae,
        wmse=weighted.wmse,
        per_class_mae=weighted.per_class_mae,
        per_class_mse=weighted.per_class_mse,
        per_class_count=weighted.per_class_count,
        missing_classes=weighted.missing_classes,
        per_sequence=per_sequence,
        aggregation=Aggregation(aggregation),
        num_frames=len(df),
    )


def predictions_frame(preds):
    return pd.DataFrame(
        {
            "subject_id": [p.subject_id for p in preds],
            "sequence_id": [p.sequence_id for p in preds],
            "frame_index": [p.frame_index for p in preds],
            "label": [p.label for p in preds],
            "prediction": [p.prediction for p in preds],
        },
        columns=PREDICTION_COLUMNS,
    )


def write_predictions_csv(preds, path):
    """Per-frame curve CSV: subject_id,sequence_id,frame_index,label,prediction."""
    return save_frame(predictions_frame(preds), path)


def read_predictions_csv(path):
    df = pd.read_csv(
        path, dtype={"subject_id": str, "sequence_id": str}, keep_default_na=False,
        float_precision="round_trip", encoding="utf-8",
    )
    if list(df.columns) != PREDICTION_COLUMNS:
        raise DomainError(f"prediction CSV must have columns {','.join(PREDICTION_COLUMNS)}")
    return [
        LabeledPrediction(r.subject_id, r.sequence_id, r.frame_index, r.prediction, r.label)
        for r in df.itertuples(index=False)
    ]
