import os
from pathlib import Path

import numpy as np
import pytest

from helr.data import Dataset, mnist_datasets

REPO_ROOT = Path(__file__).resolve().parent.parent
MNIST_DIR = REPO_ROOT / "data" / "mnist"


def pytest_configure(config):
    # Tests resolve the vendored MNIST copy regardless of the working dir.
    os.environ.setdefault("HELR_DATA_DIR", str(MNIST_DIR))


@pytest.fixture(scope="session")
def mnist_train_val() -> tuple[Dataset, Dataset]:
    if not MNIST_DIR.exists():
        pytest.skip(f"MNIST data not found under {MNIST_DIR}")
    return mnist_datasets(MNIST_DIR)


@pytest.fixture(scope="session")
def mnist_train(mnist_train_val) -> Dataset:
    return mnist_train_val[0]


@pytest.fixture(scope="session")
def mnist_val(mnist_train_val) -> Dataset:
    return mnist_train_val[1]


@pytest.fixture(scope="session")
def mnist_1024(mnist_train) -> Dataset:
    """First packed row block of the training set."""
    return Dataset(mnist_train.X[:1024], mnist_train.y[:1024])


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
