import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_weights(rng, n, zero_frac=0.0):
    w = rng.uniform(0.2, 2.0, n)
    if zero_frac:
        w[rng.random(n) < zero_frac] = 0.0
        if not np.any(w > 0):
            w[0] = 1.0
    return w


def random_probabilities(rng, s):
    w = rng.uniform(0.2, 2.0, s)
    return w / w.sum()


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def report_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
