import os
from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data" / "mnist5k"

# "A<n> PASS/FAIL ..." lines collected by the acceptance tests
ACCEPTANCE_LINES = []


def mnist_paths():
    root = Path(os.environ.get("SNNSTDP_MNIST_DIR", DATA_DIR))
    for images, labels in (
        ("images-idx3-ubyte.gz", "labels-idx1-ubyte.gz"),
        ("images-idx3-ubyte", "labels-idx1-ubyte"),
        ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"),
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ):
        if (root / images).is_file() and (root / labels).is_file():
            return root / images, root / labels
    return None


@pytest.fixture(scope="session")
def mnist():
    paths = mnist_paths()
    if paths is None:
        pytest.skip("MNIST IDX files not found (set SNNSTDP_MNIST_DIR)")
    return paths


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
