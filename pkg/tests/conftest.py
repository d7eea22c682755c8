import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fewmeta import Dataset  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def battery() -> list[Dataset]:
    """Twenty fixed small datasets with k in {2, 3, 5}."""
    rng = np.random.default_rng(20240611)
    out = []
    for i, k in enumerate([2] * 6 + [3] * 7 + [5] * 7):
        se = np.sqrt(0.25 * rng.chisquare(1.0, k).clip(0.04, 2.4))
        tau = [0.0, 0.2, 0.5, 1.0][i % 4]
        y = rng.normal(0.3, tau, k) + rng.normal(0.0, se)
        out.append(Dataset.from_arrays(np.round(y, 4), np.round(se, 4)))
    # hand-picked edge cases: identical estimates, one very precise study
    out[0] = Dataset.from_arrays([0.4, 0.4], [0.3, 0.5])
    out[6] = Dataset.from_arrays([0.1, 1.9, -0.6], [0.05, 0.2, 0.3])
    return out


@pytest.fixture(scope="session")
def datasets():
    return battery()


@pytest.fixture
def three_studies():
    return Dataset.from_arrays([-1.2, -0.5, 0.1], [0.4, 0.3, 0.5], ids=["A", "B", "C"])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
