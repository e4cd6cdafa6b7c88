"""Shared constants, errors and small numeric helpers."""
from __future__ import annotations

import hashlib
import logging

import numpy as np

logger = logging.getLogger("painreg.common")

# observer-rated intensity levels 0..5
NUM_CLASSES = 6
OUTPUT_SCALE = 5.0
RAW_MAX = 15


class PainRegError(Exception):
    """Base class for every error raised by the toolkit."""


class DataError(PainRegError):
    """Input data is malformed or unusable."""


class DatasetParseError(DataError, ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DuplicateKeyError(DataError, ValueError):
    pass


class EmptyDatasetError(DataError, ValueError):
    pass


class DomainError(PainRegError, ValueError):
    pass


class ShapeError(PainRegError, ValueError):
    pass


class NumericDomainError(PainRegError, ValueError):
    pass


class ConfigError(PainRegError, ValueError):
    pass


class UsageError(PainRegError, RuntimeError):
    pass


class DivergenceError(PainRegError, ArithmeticError):
    def __init__(self, iteration, message=None, fold=None):
        self.iteration = iteration
        self.fold = fold
        text = message or f"non-finite loss at iteration {iteration}"
        if fold is not None:
            text = f"fold {fold}: {text}"
        super().__init__(text)


def check_finite(*values, what="input"):
    """Raise NumericDomainError unless every value is finite."""
    for v in values:
        if not np.all(np.isfinite(np.asarray(v, dtype=float))):
            raise NumericDomainError(f"non-finite {what}")


def derive_seed(base_seed, key):
    """Stable 63-bit seed from (base_seed, key); independent of other keys."""
    digest = hashlib.sha256(f"{int(base_seed)}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def as_scalar(x):
    """Return a Python float for 0-d results, the array otherwise."""
    arr = np.asarray(x)
    if arr.ndim == 0:
        return float(arr)
    return arr
