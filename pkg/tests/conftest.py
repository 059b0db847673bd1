import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sanskg.datasets import DATA_ROOT  # noqa: E402
from sanskg.graph import TripleStore, load_dataset, write_dataset  # noqa: E402

ACCEPTANCE_RESULTS = []


def record_acceptance(criterion, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


def benchmark_dir(name):
    root = os.environ.get("SANS_DATA_DIR")
    if not root:
        return None
    p = Path(root) / name
    return p if (p / "train.txt").is_file() else None


@pytest.fixture(scope="session")
def synthetic():
    return load_dataset(DATA_ROOT / "synthetic50")


@pytest.fixture
def path_store():
    return TripleStore.from_labeled([("a", "r", "b"), ("b", "r", "c"), ("c", "r", "d")])


@pytest.fixture
def star_store():
    rows = [("c", "r", f"l{i}") for i in range(1, 5)]
    return TripleStore.from_labeled(rows)


@pytest.fixture
def make_dataset(tmp_path):
    def make(splits, name="ds"):
        return write_dataset(tmp_path / name, splits)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
