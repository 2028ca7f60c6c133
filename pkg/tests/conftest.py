import os
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_MNIST_DIR = REPO_ROOT / "data" / "mnist"

_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def mnist_dir() -> Path:
    return Path(os.environ.get("QUERYPOOL_MNIST_DIR", DEFAULT_MNIST_DIR))


def mnist_path(key: str) -> Path:
    base = mnist_dir() / _FILES[key]
    for candidate in (base, base.with_name(base.name + ".gz")):
        if candidate.exists():
            return candidate
    pytest.skip(f"MNIST file {base.name} not found under {mnist_dir()}")


@pytest.fixture(scope="session")
def mnist_files() -> dict[str, Path]:
    return {key: mnist_path(key) for key in _FILES}


@pytest.fixture(scope="session")
def mnist_train(mnist_files):
    from querypool.data import load_mnist

    return load_mnist(mnist_files["train_images"], mnist_files["train_labels"])


@pytest.fixture(scope="session")
def mnist_test(mnist_files):
    from querypool.data import load_mnist

    return load_mnist(mnist_files["test_images"], mnist_files["test_labels"])
