import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_batch(rng, n=8, C=4, low=0.02, high=0.98, p_pos=0.4):
    P = rng.uniform(low, high, size=(n, C))
    Y = (rng.uniform(size=(n, C)) < p_pos).astype(np.int64)
    return Y, P


# one line per acceptance criterion, printed after the run
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, title, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title}  [{detail}]")
