import numpy as np
import pytest

from negcontrol import NCDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n=200, p=1, binary_x=False):
    """Loosely confounded sample with non-degenerate negative controls."""
    u = rng.standard_normal(n)
    v = rng.standard_normal((n, p)) + 0.3 * u[:, None]
    z = 0.5 * u + rng.standard_normal(n) + v[:, 0]
    if binary_x:
        x = (rng.random(n) < 1 / (1 + np.exp(-(z + u)))).astype(float)
    else:
        x = z + u + rng.standard_normal(n)
    w = u + 0.5 * v[:, 0] + rng.standard_normal(n)
    y = 1 + 0.5 * x + v @ np.ones(p) + u + rng.standard_normal(n)
    return NCDataset(x, y, z, w, v)


@pytest.fixture
def dataset(rng):
    return random_dataset(rng)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line(capsys):
    """Record a one-line verdict; it is printed immediately and repeated in the terminal summary."""

    def record(number, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
