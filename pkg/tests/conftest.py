import os

import numpy as np
import pytest
import torch

from src.services.exwave.config import IDX_FILES
from src.services.exwave.data import Dataset, write_idx
from src.services.exwave.diffraction import PropagationGeometry

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def compact_geometry(n: int) -> PropagationGeometry:
    """Small near-field geometry: a two-pixel hop keeps the light on the grid."""
    return PropagationGeometry(n=n, pitch=0.5e-6, wavelength=1e-6, spacing=1e-6)


def make_dataset(count: int, seed: int = 0, split: str = "train") -> Dataset:
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(count, 28, 28), dtype=np.uint8)
    labels = (np.arange(count) % 10).astype(np.uint8)
    return Dataset(images=images, labels=labels, name="mnist", split=split)


def write_dataset_dir(directory, train: Dataset, test: Dataset):
    for split, dataset, compress in (("train", train, True), ("test", test, False)):
        images_stem, labels_stem = IDX_FILES[split]
        suffix = ".gz" if compress else ""
        write_idx(
            dataset,
            os.path.join(directory, images_stem + suffix),
            os.path.join(directory, labels_stem + suffix),
            compress=compress,
        )
    return str(directory)


@pytest.fixture
def generator():
    g = torch.Generator()
    g.manual_seed(1234)
    return g


@pytest.fixture
def tiny_train():
    return make_dataset(20, seed=1)


@pytest.fixture
def tiny_test():
    return make_dataset(10, seed=2, split="test")


@pytest.fixture
def dataset_dir(tmp_path, tiny_train, tiny_test):
    directory = tmp_path / "data"
    directory.mkdir()
    return write_dataset_dir(directory, tiny_train, tiny_test)


@pytest.fixture
def mnist_dir():
    path = os.getenv("EXWAVE_MNIST_DIR")
    if not path:
        pytest.skip("EXWAVE_MNIST_DIR not set")
    return path
