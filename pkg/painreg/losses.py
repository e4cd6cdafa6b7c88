"""
Regression losses, the center-loss regularizer and their joint objective.

Scalar functions accept floats or numpy arrays (elementwise). Batch reductions
average over the batch, for the center term as well.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._common import ConfigError, DomainError, ShapeError, as_scalar, check_finite

logger = logging.getLogger("painreg.losses")


class RegressionKind(str, Enum):
    MSE = "mse"
    SMOOTH_L1 = "smooth_l1"
    L1 = "l1"


class CenterNorm(str, Enum):
    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class LossConfig:
    turning_point: float = 1.0
    center_weight: float = 0.01
    center_norm: CenterNorm = CenterNorm.L1
    regression_kind: RegressionKind = RegressionKind.SMOOTH_L1

    def __post_init__(self):
        try:
            object.__setattr__(self, "center_norm", CenterNorm(self.center_norm))
            object.__setattr__(self, "regression_kind", RegressionKind(self.regression_kind))
            object.__setattr__(self, "turning_point", float(self.turning_point))
            object.__setattr__(self, "center_weight", float(self.center_weight))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid loss config: {e}") from e
        if not np.isfinite(self.turning_point) or self.turning_point < 0:
            raise ConfigError("turning point t must be a finite value >= 0")
        if not np.isfinite(self.center_weight) or self.center_weight < 0:
            raise ConfigError("center weight lambda must be a finite value >= 0")

    def to_dict(self):
        return {
            "t": self.turning_point,
            "lambda": self.center_weight,
            "norm": self.center_norm.value,
            "kind": self.regression_kind.value,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        unknown = set(data) - {"t", "lambda", "norm", "kind"}
        if unknown:
            raise ConfigError(f"unknown loss config keys: {sorted(unknown)}")
        defaults = cls()
        return cls(
            turning_point=data.get("t", defaults.turning_point),
            center_weight=data.get("lambda", defaults.center_weight),
            center_norm=data.get("norm", defaults.center_norm),
            regression_kind=data.get("kind", defaults.regression_kind),
        )


@dataclass(eq=False)
class Centers:
    """Per-class center vectors, one row per class, in hidden-feature space."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ShapeError(f"centers must be a (K, H) matrix, got shape {values.shape}")
        check_finite(values, what="center")
        self.values = values

    @classmethod
    def zeros(cls, num_classes, dim):
        return cls(np.zeros((num_classes, dim)))

    @property
    def num_classes(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def row(self, k):
        return self.values[k]

    def copy(self):
        return Centers(self.values.copy())


@dataclass(frozen=True)
class LossParts:
    regression: float
    center: float
    weighted_center: float

    @property
    def total(self):
        return self.regression + self.weighted_center

    def to_dict(self):
        return {
            "total": self.total,
            "regression": self.regression,
            "center": self.center,
            "weighted_center": self.weighted_center,
        }


def _residual(pred, label):
    pred = np.asarray(pred, dtype=float)
    label = np.asarray(label, dtype=float)
    check_finite(pred, label)
    return pred - label


def mse_loss(pred, label):
    return as_scalar(_residual(pred, label) ** 2)


def mse_grad(pred, label):
    return as_scalar(2.0 * _residual(pred, label))


def smooth_l1_loss(pred, label, t=1.0):
    """0.5 e^2 below the turning point t, e - t + 0.5 t^2 from t on."""
    e = np.abs(_residual(pred, label))
    return as_scalar(np.where(e < t, 0.5 * e ** 2, e - t + 0.5 * t ** 2))


def smooth_l1_grad(pred, label, t=1.0):
    # e == t takes the linear branch
    d = _residual(pred, label)
    return as_scalar(np.where(np.abs(d) < t, d, np.sign(d)))


def l1_loss(pred, label):
    return as_scalar(np.abs(_residual(pred, label)))


def l1_grad(pred, label):
    return as_scalar(np.sign(_residual(pred, label)))


def regression_loss(pred, label, config):
    kind = config.regression_kind
    if kind is RegressionKind.MSE:
        return mse_loss(pred, label)
    if kind is RegressionKind.L1:
        return l1_loss(pred, label)
    return smooth_l1_loss(pred, label, config.turning_point)


def regression_grad(pred, label, config):
    kind = config.regression_kind
    if kind is RegressionKind.MSE:
        return mse_grad(pred, label)
    if kind is RegressionKind.L1:
        return l1_grad(pred, label)
    return smooth_l1_grad(pred, label, config.turning_point)


def _center_matrix(centers):
    if isinstance(centers, Centers):
        return centers.values
    return np.asarray(centers, dtype=float)


def _center_diff(x, label, centers):
    c = _center_matrix(centers)
    x = np.asarray(x, dtype=float)
    if x.shape != (c.shape[1],):
        raise ShapeError(f"feature vector has shape {x.shape}, centers expect ({c.shape[1]},)")
    if isinstance(label, bool) or int(label) != label or not 0 <= int(label) < c.shape[0]:
        raise DomainError(f"label {label!r} outside [0, {c.shape[0] - 1}]")
    check_finite(x)
    return x - c[int(label)]


def center_loss(x, label, centers, p=CenterNorm.L1):
    """||x - c_label||_1 for L1, squared Euclidean distance for L2."""
    d = _center_diff(x, label, centers)
    if CenterNorm(p) is CenterNorm.L1:
        return float(np.abs(d).sum())
    return float((d ** 2).sum())


def center_loss_grads(x, label, centers, p=CenterNorm.L1):
    """(gradient wrt x, gradient wrt c_label); every other center row has zero gradient."""
    d = _center_diff(x, label, centers)
    if CenterNorm(p) is CenterNorm.L1:
        grad_x = np.sign(d)
    else:
        grad_x = 2.0 * d
    return grad_x, -grad_x


def joint_loss(pred, x, label, centers, config):
    """L_R(pred, label) + lambda * L_C(x, label); returns (total, LossParts)."""
    regression = float(regression_loss(pred, float(label), config))
    center = center_loss(x, label, centers, config.center_norm)
    parts = LossParts(regression, center, config.center_weight * center)
    return parts.total, parts


def batch_joint_loss(preds, hidden, labels, centers, config):
    """
    Batch-averaged joint loss.

    Returns (LossParts, d/d preds, d/d hidden rows, d/d centers matrix).
    """
    labels = np.asarray(labels, dtype=np.int64)
    c = _center_matrix(centers)
    batch = len(labels)
    targets = labels.astype(float)

    reg = np.asarray(regression_loss(preds, targets, config))
    dpred = np.asarray(regression_grad(preds, targets, config)) / batch

    check_finite(hidden)
    diff = hidden - c[labels]
    if config.center_norm is CenterNorm.L1:
        per_sample = np.abs(diff).sum(axis=1)
        g = np.sign(diff)
    else:
        per_sample = (diff ** 2).sum(axis=1)
        g = 2.0 * diff

    lam = config.center_weight
    dhidden = (lam / batch) * g
    dcenters = np.zeros_like(c)
    np.add.at(dcenters, labels, -dhidden)

    center = float(per_sample.mean())
    parts = LossParts(float(reg.mean()), center, lam * center)
    return parts, dpred, dhidden, dcenters
