import numpy as np
import pytest

from painreg.data import Dataset, Sample, generate_synthetic


def _build(labels_by_sequence, feature_dim=3, seed=0, num_classes=6):
    """{(subject, sequence): [labels...]} -> Dataset with random features."""
    rng = np.random.default_rng(seed)
    samples = []
    for (subject, sequence), labels in labels_by_sequence.items():
        for frame_index, label in enumerate(labels):
            samples.append(Sample(subject, sequence, frame_index, rng.standard_normal(feature_dim), label))
    return Dataset(samples=samples, feature_dim=feature_dim, num_classes=num_classes)


@pytest.fixture
def make_dataset():
    return _build


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_synth():
    # 3 subjects x 24 frames: every class appears 4 times per subject
    return generate_synthetic(3, 24, 4, 0.5, seed=1)


@pytest.fixture
def write_text(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write
