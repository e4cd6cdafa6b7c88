"""
Regression head on precomputed embeddings:

    input (D) -> FC (H) -> activation -> inverted dropout -> FC (1) -> S * sigmoid

trained with SGD on the joint loss L_R + lambda * L_C, the center loss being
applied to the hidden features, with the centers learned by gradient descent
alongside the head parameters.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
from scipy.special import expit

from ._common import (
    OUTPUT_SCALE,
    ConfigError,
    DataError,
    DivergenceError,
    DomainError,
    EmptyDatasetError,
    NumericDomainError,
    ShapeError,
    UsageError,
    as_scalar,
    check_finite,
)
from .losses import Centers, LossConfig, LossParts, batch_joint_loss
from .sampler import DEFAULT_BATCH_SIZE, BatchSampler, SamplerKind
from .utils import load_json, save_json

logger = logging.getLogger("painreg.model")

CHECKPOINT_VERSION = 1
INIT_SCHEME = {"W1": "glorot_uniform", "b1": "zeros", "w": "zeros", "b": "zeros"}
_TINY = np.finfo(float).tiny


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "identity"


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


class CenterInit(str, Enum):
    ZEROS = "zeros"
    FIRST_BATCH = "first_batch"


def scaled_sigmoid(z, scale=OUTPUT_SCALE):
    """S / (1 + exp(-z)), kept strictly inside (0, S) under float rounding."""
    out = scale * expit(np.asarray(z, dtype=float))
    return as_scalar(np.clip(out, _TINY, np.nextafter(scale, 0.0)))


def scaled_sigmoid_grad(z, scale=OUTPUT_SCALE):
    s = expit(np.asarray(z, dtype=float))
    return as_scalar(scale * s * (1.0 - s))


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass(eq=False)
class RegressionHead:
    W1: np.ndarray
    b1: np.ndarray
    w: np.ndarray
    b: float = 0.0
    dropout_rate: float = 0.5
    activation: Activation = Activation.RELU
    output_scale: float = OUTPUT_SCALE
    version: int = field(default=0, repr=False)

    def __post_init__(self):
        self.W1 = np.array(self.W1, dtype=float)
        self.b1 = np.array(self.b1, dtype=float)
        self.w = np.array(self.w, dtype=float)
        self.b = float(self.b)
        self.activation = Activation(self.activation)
        if self.W1.ndim != 2 or self.b1.shape != (self.W1.shape[0],) or self.w.shape != (self.W1.shape[0],):
            raise ShapeError(
                f"inconsistent head shapes W1={self.W1.shape} b1={self.b1.shape} w={self.w.shape}"
            )
        check_finite(self.W1, self.b1, self.w, self.b, what="head parameter")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if not self.output_scale > 0:
            raise ConfigError("output_scale must be positive")

    @classmethod
    def initialize(cls, input_dim, hidden_dim=50, rng=None, dropout_rate=0.5,
                   activation=Activation.RELU, output_scale=OUTPUT_SCALE):
        """Glorot-uniform hidden weights; output weights and all biases start at zero,
        so the untrained head predicts S/2 for every input.
        """
        rng = rng if rng is not None else np.random.default_rng(0)
        return cls(
            W1=_glorot(rng, input_dim, hidden_dim, (hidden_dim, input_dim)),
            b1=np.zeros(hidden_dim),
            w=np.zeros(hidden_dim),
            b=0.0,
            dropout_rate=dropout_rate,
            activation=activation,
            output_scale=output_scale,
        )

    @property
    def input_dim(self):
        return self.W1.shape[1]

    @property
    def hidden_dim(self):
        return self.W1.shape[0]

    def copy(self):
        return replace(self, W1=self.W1.copy(), b1=self.b1.copy(), w=self.w.copy(), version=0)

    def to_dict(self):
        return {"W1": self.W1.tolist(), "b1": self.b1.tolist(), "w": self.w.tolist(), "b": self.b}


@dataclass(eq=False)
class ForwardCache:
    head: RegressionHead
    version: int
    mode: Mode
    single: bool
    inputs: np.ndarray
    pre: np.ndarray
    mask: np.ndarray
    hidden: np.ndarray
    z: np.ndarray
    pred: np.ndarray


@dataclass(eq=False)
class ForwardResult:
    pred: object
    hidden: np.ndarray
    cache: ForwardCache


@dataclass(eq=False)
class Gradients:
    W1: np.ndarray
    b1: np.ndarray
    w: np.ndarray
    b: float
    centers: np.ndarray
    parts: LossParts

    def all_finite(self):
        return all(np.all(np.isfinite(g)) for g in (self.W1, self.b1, self.w, self.b, self.centers))


def forward(head, inputs, mode=Mode.EVAL, rng=None):
    """
    One input vector or a (B, D) batch. Train mode draws an inverted-dropout
    mask from `rng` (survivors scaled by 1 / (1 - rate)); Eval mode applies none.
    """
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.ndim != 2 or X.shape[1] != head.input_dim:
        raise ShapeError(f"input has shape {x.shape}, head expects D={head.input_dim}")
    mode = Mode(mode)

    pre = X @ head.W1.T + head.b1
    act = np.maximum(pre, 0.0) if head.activation is Activation.RELU else pre
    if mode is Mode.TRAIN and head.dropout_rate > 0:
        if rng is None:
            raise UsageError("train-mode forward with dropout needs an rng")
        keep = 1.0 - head.dropout_rate
        mask = (rng.random(act.shape) < keep) / keep
    else:
        mask = np.ones_like(act)
    hidden = act * mask
    z = hidden @ head.w + head.b
    pred = np.asarray(scaled_sigmoid(z, head.output_scale))

    cache = ForwardCache(head, head.version, mode, single, X, pre, mask, hidden, z, pred)
    if single:
        return ForwardResult(float(pred[0]), hidden[0], cache)
    return ForwardResult(pred, hidden, cache)


def backward(cache, label, centers, loss_config):
    """Exact gradients of the batch-averaged joint loss for W1, b1, w, b and the centers."""
    if not isinstance(cache, ForwardCache):
        raise UsageError("backward needs the cache of a forward call")
    if cache.version != cache.head.version:
        raise UsageError("stale forward cache: head parameters changed since the forward pass")
    head = cache.head
    labels = np.atleast_1d(np.asarray(label))
    if labels.shape != (cache.inputs.shape[0],):
        raise ShapeError(f"{labels.size} labels for a batch of {cache.inputs.shape[0]}")
    center_matrix = centers.values if isinstance(centers, Centers) else np.asarray(centers, dtype=float)
    if center_matrix.ndim != 2 or center_matrix.shape[1] != head.hidden_dim:
        raise ShapeError(f"centers of shape {center_matrix.shape} do not match H={head.hidden_dim}")
    if np.any(labels < 0) or np.any(labels >= center_matrix.shape[0]):
        raise DomainError(f"labels must lie in [0, {center_matrix.shape[0] - 1}]")
    labels = labels.astype(np.int64)

    parts, dpred, dhidden_center, dcenters = batch_joint_loss(
        cache.pred, cache.hidden, labels, center_matrix, loss_config
    )
    dz = dpred * scaled_sigmoid_grad(cache.z, head.output_scale)
    dw = cache.hidden.T @ dz
    db = float(dz.sum())
    dhidden = np.outer(dz, head.w) + dhidden_center
    dpre = dhidden * cache.mask
    if head.activation is Activation.RELU:
        dpre = dpre * (cache.pre > 0)
    dW1 = dpre.T @ cache.inputs
    db1 = dpre.sum(axis=0)
    return Gradients(W1=dW1, b1=db1, w=dw, b=db, centers=dcenters, parts=parts)


class SGD:
    """Plain SGD, optionally with classical momentum."""

    def __init__(self, learning_rate, momentum=0.0):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = {}

    def _delta(self, name, grad):
        if not self.momentum:
            return -self.learning_rate * grad
        v = self.momentum * self.velocity.get(name, 0.0) - self.learning_rate * grad
        self.velocity[name] = v
        return v

    def step(self, head, centers, grads):
        head.W1 += self._delta("W1", grads.W1)
        head.b1 += self._delta("b1", grads.b1)
        head.w += self._delta("w", grads.w)
        head.b = float(head.b + self._delta("b", grads.b))
        centers.values += self._delta("centers", grads.centers)
        head.version += 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    iterations: int = 5000
    batch_size: int = DEFAULT_BATCH_SIZE
    momentum: float = 0.0
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    sampler_kind: SamplerKind = SamplerKind.BALANCED
    hidden_dim: int = 50
    dropout_rate: float = 0.5
    activation: Activation = Activation.RELU
    output_scale: float = OUTPUT_SCALE
    center_init: CenterInit = CenterInit.ZEROS
    log_every: int = 100
    feature_dim: Optional[int] = None

    _KEYS = {
        "learning_rate", "iterations", "batch_size", "momentum", "seed", "loss", "sampler",
        "hidden_dim", "dropout_rate", "activation", "output_scale", "center_init", "log_every",
        "feature_dim",
    }

    def __post_init__(self):
        try:
            for name, enum in (("sampler_kind", SamplerKind), ("activation", Activation),
                               ("center_init", CenterInit)):
                object.__setattr__(self, name, enum(getattr(self, name)))
            if isinstance(self.loss, dict):
                object.__setattr__(self, "loss", LossConfig.from_dict(self.loss))
            for name in ("iterations", "batch_size", "seed", "hidden_dim", "log_every"):
                object.__setattr__(self, name, int(getattr(self, name)))
            for name in ("learning_rate", "momentum", "dropout_rate", "output_scale"):
                object.__setattr__(self, name, float(getattr(self, name)))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid training config: {e}") from e
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if not self.output_scale > 0:
            raise ConfigError("output_scale must be positive")
        if self.log_every < 1:
            raise ConfigError("log_every must be positive")

    def to_dict(self):
        return {
            "learning_rate": self.learning_rate,
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "momentum": self.momentum,
            "seed": self.seed,
            "loss": self.loss.to_dict(),
            "sampler": self.sampler_kind.value,
            "hidden_dim": self.hidden_dim,
            "dropout_rate": self.dropout_rate,
            "activation": self.activation.value,
            "output_scale": self.output_scale,
            "center_init": self.center_init.value,
            "log_every": self.log_every,
            "feature_dim": self.feature_dim,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        unknown = set(data) - cls._KEYS
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        if "sampler" in data:
            data["sampler_kind"] = data.pop("sampler")
        data["loss"] = LossConfig.from_dict(data.get("loss"))
        return cls(**data)


@dataclass(frozen=True)
class LogEntry:
    iteration: int
    total: float
    regression: float
    center: float

    def to_dict(self):
        return {"iteration": self.iteration, "total": self.total,
                "regression": self.regression, "center": self.center}


@dataclass(eq=False)
class TrainedModel:
    head: RegressionHead
    centers: Centers
    training_log: list = field(default_factory=list)
    config: TrainConfig = field(default_factory=TrainConfig)


def _first_batch_means(head, xb, yb, num_classes):
    hidden = forward(head, xb, Mode.EVAL).hidden
    values = np.zeros((num_classes, head.hidden_dim))
    for k in np.unique(yb):
        values[k] = hidden[yb == k].mean(axis=0)
    return Centers(values)


def train(dataset, config=None):
    """Run `config.iterations` SGD steps on `dataset`; deterministic given config.seed."""
    config = config or TrainConfig()
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    if config.feature_dim is not None and config.feature_dim != dataset.feature_dim:
        raise ShapeError(f"config expects D={config.feature_dim}, data has D={dataset.feature_dim}")

    init_seq, batch_seq, dropout_seq = np.random.SeedSequence(config.seed).spawn(3)
    dropout_rng = np.random.default_rng(dropout_seq)
    head = RegressionHead.initialize(
        dataset.feature_dim,
        config.hidden_dim,
        np.random.default_rng(init_seq),
        dropout_rate=config.dropout_rate,
        activation=config.activation,
        output_scale=config.output_scale,
    )
    centers = Centers.zeros(dataset.num_classes, config.hidden_dim)
    sampler = BatchSampler(
        config.sampler_kind, dataset.labels, config.batch_size,
        np.random.default_rng(batch_seq), num_classes=dataset.num_classes,
    )
    optimizer = SGD(config.learning_rate, config.momentum)
    X = dataset.features
    y = dataset.labels
    log = []

    logger.info(
        "train: %d frames, D=%d, H=%d, %d iterations, lr=%g, loss=%s, sampler=%s, seed=%d",
        len(dataset), dataset.feature_dim, config.hidden_dim, config.iterations,
        config.learning_rate, config.loss.to_dict(), config.sampler_kind.value, config.seed,
    )
    for it in range(1, config.iterations + 1):
        batch = next(sampler)
        xb = X[batch.positions]
        yb = y[batch.positions]
        if it == 1 and config.center_init is CenterInit.FIRST_BATCH:
            centers = _first_batch_means(head, xb, yb, dataset.num_classes)

        result = forward(head, xb, Mode.TRAIN, dropout_rng)
        try:
            grads = backward(result.cache, yb, centers, config.loss)
        except NumericDomainError as e:
            raise DivergenceError(it) from e
        if not np.isfinite(grads.parts.total) or not grads.all_finite():
            raise DivergenceError(it)
        optimizer.step(head, centers, grads)

        if it % config.log_every == 0 or it == config.iterations:
            entry = LogEntry(it, grads.parts.total, grads.parts.regression, grads.parts.center)
            log.append(entry)
            logger.debug(
                "iter %d: total=%.6f regression=%.6f center=%.6f",
                it, entry.total, entry.regression, entry.center,
            )

    if log:
        logger.info("train done: final loss %.6f after %d iterations", log[-1].total, config.iterations)
    return TrainedModel(head=head, centers=centers, training_log=log, config=config)


def _input_matrix(model, samples):
    head = model.head if isinstance(model, TrainedModel) else model
    feats = getattr(samples, "features", None)
    if feats is None:
        feats = np.array([s.features for s in samples], dtype=float)
    if feats.ndim != 2 or feats.shape[1] != head.input_dim:
        raise ShapeError(f"features of width {feats.shape[-1]} do not match head D={head.input_dim}")
    return head, feats


def predict(model, samples):
    """Eval-mode predictions, one per sample, in input order."""
    if len(samples) == 0:
        return []
    head, X = _input_matrix(model, samples)
    return forward(head, X, Mode.EVAL).pred.tolist()


def hidden_features(model, samples):
    """Eval-mode hidden layer outputs, shape (N, H)."""
    head = model.head if isinstance(model, TrainedModel) else model
    if len(samples) == 0:
        return np.zeros((0, head.hidden_dim))
    head, X = _input_matrix(model, samples)
    return forward(head, X, Mode.EVAL).hidden


def to_checkpoint(model):
    head = model.head
    return {
        "format_version": CHECKPOINT_VERSION,
        "dims": {
            "D": head.input_dim,
            "H": head.hidden_dim,
            "K": model.centers.num_classes,
            "S": head.output_scale,
        },
        "params": head.to_dict(),
        "centers": model.centers.values.tolist(),
        "dropout_rate": head.dropout_rate,
        "activation": head.activation.value,
        "init": INIT_SCHEME,
        "loss": model.config.loss.to_dict(),
        "seed": model.config.seed,
        "config": model.config.to_dict(),
        "training_log": [e.to_dict() for e in model.training_log],
    }


def from_checkpoint(data):
    if data.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint format {data.get('format_version')!r}")
    try:
        params = data["params"]
        dims = data["dims"]
        head = RegressionHead(
            W1=params["W1"], b1=params["b1"], w=params["w"], b=params["b"],
            dropout_rate=data["dropout_rate"], activation=data["activation"], output_scale=dims["S"],
        )
        centers = Centers(data["centers"])
        config = TrainConfig.from_dict(data.get("config"))
        log = [LogEntry(**e) for e in data.get("training_log", [])]
    except (KeyError, TypeError) as e:
        raise DataError(f"malformed checkpoint: {e}") from e
    if (head.input_dim, head.hidden_dim, centers.num_classes) != (dims["D"], dims["H"], dims["K"]):
        raise ShapeError("checkpoint dims do not match its parameter arrays")
    if centers.dim != head.hidden_dim:
        raise ShapeError("checkpoint centers do not match the hidden width")
    return TrainedModel(head=head, centers=centers, training_log=log, config=config)


def save_checkpoint(model, path):
    return save_json(to_checkpoint(model), path)


def load_checkpoint(path):
    return from_checkpoint(load_json(path))
