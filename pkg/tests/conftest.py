import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from losslab.data import Dataset  # noqa: E402
from losslab.model import InitScheme, ModelSpec, build, initialize  # noqa: E402
from losslab.rng import Stream  # noqa: E402


@pytest.fixture
def small_bn():
    model = build(ModelSpec((6, 5, 3), batch_norm=True))
    theta = initialize(model, InitScheme(), Stream(7, "init"))
    return model, theta


def blob_data(n=60, dim=6, classes=3, seed=3):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % classes
    x = rng.normal(size=(n, dim))
    x[np.arange(n), y] += 3.0
    return Dataset(x, y, classes, "blobs")


@pytest.fixture
def tiny_data():
    return blob_data()


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
