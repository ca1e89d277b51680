"""Shared fixtures: seeded generators, tiny IDX datasets and config files."""

import os
from pathlib import Path

import numpy as np
import pytest

from unitlab.data import write_idx

MNIST_ENV = "UNITLAB_MNIST_DIR"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _class_images(labels: np.ndarray, side: int, seed: int) -> np.ndarray:
    """Noisy images whose bright column encodes the label."""
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 40, size=(labels.size, side, side))
    for index, label in enumerate(labels):
        images[index, :, label % side] = 220
        images[index, label // side, :] = 180
    return images.astype(np.uint8)


@pytest.fixture
def tiny_idx(tmp_path) -> dict[str, Path]:
    """A learnable 4-class problem on 6x6 images, written as IDX (train set gzipped)."""
    side = 6
    train_labels = np.tile(np.arange(4, dtype=np.uint8), 24)
    test_labels = np.tile(np.arange(4, dtype=np.uint8), 8)
    paths = {
        "train_images": tmp_path / "data" / "train-images.idx3-ubyte.gz",
        "train_labels": tmp_path / "data" / "train-labels.idx1-ubyte.gz",
        "test_images": tmp_path / "data" / "t10k-images.idx3-ubyte",
        "test_labels": tmp_path / "data" / "t10k-labels.idx1-ubyte",
    }
    write_idx(paths["train_images"], _class_images(train_labels, side, 1))
    write_idx(paths["train_labels"], train_labels)
    write_idx(paths["test_images"], _class_images(test_labels, side, 2))
    write_idx(paths["test_labels"], test_labels)
    return paths


@pytest.fixture
def tiny_config(tmp_path, tiny_idx):
    """Write a small flat TOML config; keyword overrides are added as extra lines."""

    def make(name: str = "unitlab_config.toml", **overrides) -> Path:
        values = {
            "seed": 3,
            "epochs": 2,
            "batch_size": 16,
            "hidden_widths": [12, 8],
            "num_classes": 4,
            "lr": 0.05,
            "milestones": [2],
            "out_dir": str(tmp_path / "run"),
            "critic_iterations": 20,
            "critic_batch_size": 16,
            "critic_hidden": [8],
            "emdist_train_samples": 64,
            "emdist_test_samples": 32,
            "bound_trials": 6,
            "bound_samples": 16,
            **{key: str(path) for key, path in tiny_idx.items()},
        }
        values.update(overrides)
        lines = ["# generated test configuration"]
        for key, value in values.items():
            if isinstance(value, str):
                lines.append(f'{key} = "{value}"')
            elif isinstance(value, bool):
                lines.append(f"{key} = {'true' if value else 'false'}")
            else:
                lines.append(f"{key} = {value}")
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n")
        return path

    return make


@pytest.fixture
def mnist_dir() -> Path:
    """Directory with the four MNIST IDX files, or skip."""
    location = os.environ.get(MNIST_ENV)
    if not location:
        pytest.skip(f"{MNIST_ENV} not set")
    return Path(location)
