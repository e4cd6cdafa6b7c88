"""Minibatch construction: class-balanced and plain uniform sampling, both with replacement."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._common import ConfigError, EmptyDatasetError

logger = logging.getLogger("painreg.sampler")

DEFAULT_BATCH_SIZE = 36


class SamplerKind(str, Enum):
    BALANCED = "balanced"
    UNIFORM = "uniform"


@dataclass(frozen=True, eq=False)
class ClassIndex:
    """Dataset positions partitioned by label; lists[k] holds positions with label k."""

    lists: tuple

    @property
    def num_classes(self):
        return len(self.lists)

    @property
    def sizes(self):
        return [len(lst) for lst in self.lists]

    def non_empty_classes(self):
        return [k for k, lst in enumerate(self.lists) if len(lst)]


@dataclass(frozen=True, eq=False)
class Batch:
    positions: np.ndarray

    @property
    def size(self):
        return len(self.positions)


def build_class_index(dataset, num_classes=None):
    """Partition positions of `dataset` (a Dataset or a label array) by label."""
    labels = np.asarray(getattr(dataset, "labels", dataset), dtype=np.int64)
    if num_classes is None:
        num_classes = getattr(dataset, "num_classes", int(labels.max()) + 1 if labels.size else 0)
    lists = []
    for k in range(num_classes):
        positions = np.flatnonzero(labels == k)
        positions.setflags(write=False)
        lists.append(positions)
    index = ClassIndex(lists=tuple(lists))
    empty = [k for k, lst in enumerate(lists) if not len(lst)]
    if empty and labels.size:
        logger.warning(
            "classes %s have no samples; balanced batches use the %d non-empty classes",
            empty, num_classes - len(empty),
        )
    return index


def next_balanced_batch(index, batch_size, rng):
    """Draw batch_size / K' positions with replacement from each of the K' non-empty classes."""
    classes = index.non_empty_classes()
    if not classes:
        raise EmptyDatasetError("cannot draw a balanced batch: every class is empty")
    if batch_size < 1 or batch_size % len(classes):
        raise ConfigError(
            f"batch size {batch_size} is not a positive multiple of the {len(classes)} non-empty classes"
        )
    per_class = batch_size // len(classes)
    parts = []
    for k in classes:
        members = index.lists[k]
        parts.append(members[rng.integers(0, len(members), size=per_class)])
    return Batch(positions=np.concatenate(parts))


def next_uniform_batch(dataset_size, batch_size, rng):
    if dataset_size < 1:
        raise EmptyDatasetError("cannot draw a batch from an empty dataset")
    if batch_size < 1:
        raise ConfigError(f"batch size must be positive, got {batch_size}")
    return Batch(positions=rng.integers(0, dataset_size, size=batch_size))


class BatchSampler:
    """Endless stream of batches over a label array; the rng is owned by the caller's run."""

    def __init__(self, kind, labels, batch_size, rng, num_classes=None):
        self.kind = SamplerKind(kind)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.batch_size = int(batch_size)
        self.rng = rng
        self.index = None
        if self.kind is SamplerKind.BALANCED:
            self.index = build_class_index(self.labels, num_classes)
            self.batch_size = balanced_batch_size(self.batch_size, len(self.index.non_empty_classes()))

    def __iter__(self):
        return self

    def __next__(self):
        if self.kind is SamplerKind.BALANCED:
            return next_balanced_batch(self.index, self.batch_size, self.rng)
        return next_uniform_batch(len(self.labels), self.batch_size, self.rng)


def balanced_batch_size(batch_size, num_present):
    """
    Nearest usable balanced batch size: K' * max(1, B // K') when B is not a
    multiple of the K' non-empty classes (a training fold may lack a level).
    """
    if batch_size < 1 or num_present < 1 or batch_size % num_present == 0:
        return batch_size
    adjusted = num_present * max(1, batch_size // num_present)
    logger.warning(
        "batch size %d is not a multiple of the %d non-empty classes; using %d",
        batch_size, num_present, adjusted,
    )
    return adjusted
