import itertools

import numpy as np
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def loop_einstein(a, b, m):
    """Nested-loop Einstein product: the reference every fast path is checked against."""
    free_a, shared, free_b = a.shape[: a.ndim - m], a.shape[a.ndim - m :], b.shape[m:]
    out = np.zeros(free_a + free_b)
    for i in itertools.product(*map(range, free_a)):
        for j in itertools.product(*map(range, free_b)):
            s = 0.0
            for k in itertools.product(*map(range, shared)):
                s += a[i + k] * b[k + j]
            out[i + j] = s
    if out.ndim == 0:
        out = out.reshape(1, 1)
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
