"""
Frame-level feature datasets.

CSV layout: `subject_id,sequence_id,frame_index,label,f0,...,f{D-1}`, one row
per frame, UTF-8, LF line endings. Line 1 is the header, so data row i
(0-based) is reported as line i + 2 in parse errors.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd

from ._common import (
    NUM_CLASSES,
    RAW_MAX,
    DataError,
    DatasetParseError,
    DomainError,
    DuplicateKeyError,
    ShapeError,
)
from .utils import load_json, save_frame

logger = logging.getLogger("painreg.data")

KEY_COLUMNS = ["subject_id", "sequence_id", "frame_index", "label"]
PROFILES = ("balanced", "imbalanced")
IMBALANCED_ZERO_FRACTION = 0.9135
DEFAULT_QUANTIZATION = (0, 1, 2, 3, 4, 4) + (5,) * 10

_BAD_FIELDS = re.compile(r"Expected (\d+) fields in line (\d+), saw (\d+)")


def feature_columns(feature_dim):
    return [f"f{i}" for i in range(feature_dim)]


@dataclass(frozen=True, eq=False)
class Sample:
    subject_id: str
    sequence_id: str
    frame_index: int
    features: np.ndarray
    label: int

    def __post_init__(self):
        feats = np.array(self.features, dtype=float)
        if feats.ndim != 1:
            raise ShapeError(f"features must be a vector, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise DataError(f"non-finite feature in frame {self.key}")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "frame_index", int(self.frame_index))
        object.__setattr__(self, "label", int(self.label))

    @property
    def key(self):
        return (self.subject_id, self.sequence_id, self.frame_index)


@dataclass(frozen=True, eq=False)
class Dataset:
    samples: tuple
    feature_dim: int
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        _validate_dataset(self)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, position):
        return self.samples[position]

    @cached_property
    def features(self):
        """(N, D) matrix of feature vectors in list order."""
        if not self.samples:
            return np.zeros((0, self.feature_dim))
        mat = np.stack([s.features for s in self.samples])
        mat.setflags(write=False)
        return mat

    @cached_property
    def labels(self):
        arr = np.array([s.label for s in self.samples], dtype=np.int64)
        arr.setflags(write=False)
        return arr

    def subjects(self):
        return sorted({s.subject_id for s in self.samples})

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes).tolist()

    def subset(self, positions):
        return Dataset(
            samples=[self.samples[int(p)] for p in positions],
            feature_dim=self.feature_dim,
            num_classes=self.num_classes,
        )

    def to_frame(self):
        keys = pd.DataFrame(
            {
                "subject_id": [s.subject_id for s in self.samples],
                "sequence_id": [s.sequence_id for s in self.samples],
                "frame_index": [s.frame_index for s in self.samples],
                "label": [s.label for s in self.samples],
            },
            columns=KEY_COLUMNS,
        )
        feats = pd.DataFrame(self.features, columns=feature_columns(self.feature_dim))
        return pd.concat([keys, feats], axis=1)


def _validate_dataset(dataset):
    if int(dataset.feature_dim) < 1:
        raise DomainError("feature_dim must be positive")
    if int(dataset.num_classes) < 1:
        raise DomainError("num_classes must be positive")
    seen = set()
    last_frame = {}
    for pos, s in enumerate(dataset.samples):
        if s.features.shape != (dataset.feature_dim,):
            raise ShapeError(
                f"sample {pos} has {s.features.shape[0]} features, expected {dataset.feature_dim}"
            )
        if not 0 <= s.label < dataset.num_classes:
            raise DomainError(f"sample {pos} label {s.label} outside [0, {dataset.num_classes - 1}]")
        if s.key in seen:
            raise DuplicateKeyError(f"duplicate frame key {s.key}")
        seen.add(s.key)
        seq = (s.subject_id, s.sequence_id)
        if seq in last_frame and s.frame_index <= last_frame[seq]:
            raise DataError(f"frame_index not increasing within sequence {seq} at sample {pos}")
        last_frame[seq] = s.frame_index


@dataclass(frozen=True)
class QuantizationMap:
    """Total, monotone map from raw intensities 0..15 to classes 0..K-1."""

    table: tuple = DEFAULT_QUANTIZATION
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        table = tuple(int(v) for v in self.table)
        object.__setattr__(self, "table", table)
        if len(table) != RAW_MAX + 1:
            raise DomainError(f"quantization map needs {RAW_MAX + 1} entries, got {len(table)}")
        if table[0] != 0:
            raise DomainError("raw intensity 0 must map to 0")
        if any(not 0 <= v < self.num_classes for v in table):
            raise DomainError(f"quantized values must lie in [0, {self.num_classes - 1}]")
        if any(b < a for a, b in zip(table, table[1:])):
            raise DomainError("quantization map must be nondecreasing")

    @classmethod
    def default(cls):
        return cls()

    def to_json(self):
        return list(self.table)

    @classmethod
    def from_json(cls, values, num_classes=NUM_CLASSES):
        if not isinstance(values, (list, tuple)):
            raise DomainError("quantization map must be a JSON array of integers")
        return cls(table=tuple(values), num_classes=num_classes)


def load_quantization(source):
    """'default' or a path to a JSON array of 16 integers."""
    if source is None:
        return None
    if source == "default":
        return QuantizationMap.default()
    return QuantizationMap.from_json(load_json(source))


def _is_integral(value):
    try:
        return float(value).is_integer() and not isinstance(value, bool)
    except (TypeError, ValueError):
        return False


def quantize_label(raw, qmap=None):
    """Map a raw 0..15 intensity to the quantized class scale."""
    if not _is_integral(raw) or not 0 <= int(raw) <= RAW_MAX:
        raise DomainError(f"raw intensity {raw!r} outside [0, {RAW_MAX}]")
    qmap = qmap or QuantizationMap.default()
    return qmap.table[int(raw)]


def infer_feature_dim(path):
    """Read D from the CSV header."""
    try:
        header = list(pd.read_csv(path, nrows=0, dtype=str, encoding="utf-8").columns)
    except pd.errors.EmptyDataError as e:
        raise DatasetParseError(1, "missing header line") from e
    dim = len(header) - len(KEY_COLUMNS)
    if dim < 1 or header != KEY_COLUMNS + feature_columns(dim):
        raise DatasetParseError(1, "header must be " + ",".join(KEY_COLUMNS) + ",f0,...,f{D-1}")
    return dim


def _first_bad(mask, lines, message):
    bad = np.flatnonzero(mask)
    if bad.size:
        raise DatasetParseError(int(lines[bad[0]]), message)


def _float_block(frame, columns, lines):
    """Parse feature cells with Python float semantics so values round-trip exactly."""
    cells = frame[columns].to_numpy(dtype=object)
    try:
        return cells.astype(float)
    except ValueError:
        coerced = frame[columns].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
        _first_bad(np.isnan(coerced).any(axis=1), lines, "non-finite or non-numeric feature")
        raise DatasetParseError(None, "non-numeric feature") from None


def _integer_column(frame, name, lines):
    values = pd.to_numeric(frame[name], errors="coerce").to_numpy(dtype=float)
    ok = np.isfinite(values)
    ok[ok] = values[ok] == np.floor(values[ok])
    _first_bad(~ok, lines, f"{name} is not an integer")
    return values.astype(np.int64)


def load_dataset(path, feature_dim, num_classes=NUM_CLASSES, quantization=None):
    """
    Parse a feature CSV into a Dataset.

    With `quantization` set, the label column holds raw 0..15 intensities that
    are mapped through the QuantizationMap on ingestion.
    """
    expected = KEY_COLUMNS + feature_columns(feature_dim)
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, skip_blank_lines=False, encoding="utf-8"
        )
    except pd.errors.EmptyDataError as e:
        raise DatasetParseError(1, "missing header line") from e
    except pd.errors.ParserError as e:
        m = _BAD_FIELDS.search(str(e))
        if m:
            raise DatasetParseError(
                int(m.group(2)), f"expected {m.group(1)} columns, found {m.group(3)}"
            ) from e
        raise DatasetParseError(None, str(e)) from e

    if list(frame.columns) != expected:
        raise DatasetParseError(
            1, f"expected header with {len(expected)} columns ({','.join(KEY_COLUMNS)},f0..f{feature_dim - 1})"
        )

    lines = np.arange(len(frame)) + 2
    missing = (frame.isna() | (frame == "")).any(axis=1).to_numpy()
    _first_bad(missing, lines, f"expected {len(expected)} non-empty columns")

    feats = _float_block(frame, expected[len(KEY_COLUMNS):], lines)
    _first_bad(~np.isfinite(feats).all(axis=1), lines, "non-finite or non-numeric feature")

    frame_index = _integer_column(frame, "frame_index", lines)
    _first_bad(frame_index < 0, lines, "frame_index must be nonnegative")

    labels = _integer_column(frame, "label", lines)
    if quantization is not None:
        _first_bad((labels < 0) | (labels > RAW_MAX), lines, f"raw label outside [0, {RAW_MAX}]")
        labels = np.asarray(quantization.table, dtype=np.int64)[labels]
    _first_bad((labels < 0) | (labels >= num_classes), lines, f"label outside [0, {num_classes - 1}]")

    subjects = frame["subject_id"].tolist()
    sequences = frame["sequence_id"].tolist()
    seen = {}
    last_frame = {}
    for i, key in enumerate(zip(subjects, sequences, frame_index.tolist())):
        if key in seen:
            raise DuplicateKeyError(
                f"line {lines[i]}: duplicate frame key {key} (first on line {seen[key]})"
            )
        seen[key] = int(lines[i])
        seq = key[:2]
        if seq in last_frame and key[2] <= last_frame[seq]:
            raise DatasetParseError(int(lines[i]), f"frame_index not increasing within sequence {seq}")
        last_frame[seq] = key[2]

    samples = [
        Sample(subjects[i], sequences[i], int(frame_index[i]), feats[i], int(labels[i]))
        for i in range(len(frame))
    ]
    dataset = Dataset(samples=samples, feature_dim=feature_dim, num_classes=num_classes)
    logger.info("Loaded %d frames (D=%d) from %s", len(dataset), feature_dim, path)
    return dataset


def save_dataset(dataset, path):
    return save_frame(dataset.to_frame(), path)


def deduplicate(dataset, run_threshold=5):
    """
    Collapse each maximal same-label run longer than `run_threshold` (in list
    order within one subject/sequence) to its first frame. Shorter runs stay.
    """
    if int(run_threshold) < 1:
        raise DomainError("run_threshold must be positive")
    groups = {}
    for pos, s in enumerate(dataset.samples):
        groups.setdefault((s.subject_id, s.sequence_id), []).append(pos)

    keep = []
    for positions in groups.values():
        start = 0
        while start < len(positions):
            label = dataset.samples[positions[start]].label
            end = start
            while end + 1 < len(positions) and dataset.samples[positions[end + 1]].label == label:
                end += 1
            run = positions[start:end + 1]
            keep.extend(run if len(run) <= run_threshold else run[:1])
            start = end + 1
    keep.sort()
    logger.info(
        "deduplicate: kept %d / %d frames (threshold %d)", len(keep), len(dataset), run_threshold
    )
    return dataset.subset(keep)


def synthetic_anchors(feature_dim, num_classes=NUM_CLASSES, anchor_spacing=4.0, offset_radius=2.0, anchor_seed=0):
    """
    Class anchors mu(k) = (k - (K-1)/2) * spacing * u + o_k, centred on the origin,
    with o_k orthogonal to the unit readout direction u, so label
    k == (mu(k) . u) / spacing + (K-1)/2.
    Returns (anchors of shape (K, D), u).
    """
    rng = np.random.default_rng(anchor_seed)
    direction = rng.standard_normal(feature_dim)
    direction /= np.linalg.norm(direction)
    offsets = rng.standard_normal((num_classes, feature_dim))
    offsets -= np.outer(offsets @ direction, direction)
    norms = np.linalg.norm(offsets, axis=1, keepdims=True)
    scale = np.divide(offset_radius, norms, out=np.zeros_like(norms), where=norms > 1e-12)
    offsets *= scale
    steps = np.arange(num_classes) - (num_classes - 1) / 2.0
    anchors = steps[:, None] * anchor_spacing * direction[None, :] + offsets
    return anchors, direction


def generate_synthetic(
    num_subjects,
    frames_per_subject,
    feature_dim,
    noise_sigma,
    seed,
    profile="balanced",
    sequences_per_subject=1,
    anchor_spacing=4.0,
    offset_radius=2.0,
    anchor_seed=0,
    num_classes=NUM_CLASSES,
):
    """Gaussian clusters around linearly decodable class anchors."""
    if num_subjects < 1 or frames_per_subject < 1:
        raise DomainError("num_subjects and frames_per_subject must be positive")
    if feature_dim < 1:
        raise DomainError("feature_dim must be positive")
    if noise_sigma < 0:
        raise DomainError("noise_sigma must be nonnegative")
    if profile not in PROFILES:
        raise DomainError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    if not 1 <= sequences_per_subject <= frames_per_subject:
        raise DomainError("sequences_per_subject must lie in [1, frames_per_subject]")

    anchors, _ = synthetic_anchors(feature_dim, num_classes, anchor_spacing, offset_radius, anchor_seed)
    rng = np.random.default_rng(seed)
    total = num_subjects * frames_per_subject

    if profile == "balanced":
        base = np.arange(frames_per_subject) % num_classes
        labels = np.concatenate([rng.permutation(base) for _ in range(num_subjects)])
    else:
        is_zero = rng.random(total) < IMBALANCED_ZERO_FRACTION
        nonzero = rng.integers(1, num_classes, size=total) if num_classes > 1 else np.zeros(total, dtype=int)
        labels = np.where(is_zero, 0, nonzero)

    noise = rng.standard_normal((total, feature_dim)) * noise_sigma
    features = anchors[labels] + noise

    width = len(str(num_subjects))
    samples = []
    pos = 0
    for subj in range(num_subjects):
        subject_id = f"S{subj + 1:0{width}d}"
        chunks = np.array_split(np.arange(frames_per_subject), sequences_per_subject)
        for q, chunk in enumerate(chunks):
            for frame_index in range(len(chunk)):
                samples.append(
                    Sample(subject_id, f"{subject_id}_q{q + 1}", frame_index, features[pos], int(labels[pos]))
                )
                pos += 1

    dataset = Dataset(samples=samples, feature_dim=feature_dim, num_classes=num_classes)
    logger.info(
        "generate_synthetic: %d subjects x %d frames, D=%d, sigma=%g, profile=%s, seed=%d",
        num_subjects, frames_per_subject, feature_dim, noise_sigma, profile, seed,
    )
    return dataset
