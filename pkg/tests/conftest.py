import numpy as np
import pytest

from sinaiwalk.env_model import EnvDistribution, Environment

ACCEPTANCE_LINES = []



def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def two_point():
    return EnvDistribution.two_point(0.3)


@pytest.fixture
def uniform():
    return EnvDistribution.uniform(0.3)


def constant_env(alpha, lo=-50, hi=50):
    return Environment.from_array(np.full(hi - lo + 1, alpha), lo=lo)


class ForcedStream:
    """Replays a fixed cycle of uniforms (0 forces an up-step, 1 - 1e-12 a down-step)."""

    def __init__(self, pattern):
        self.pattern = np.asarray(pattern, dtype=float)
        self.k = 0

    def random(self, size):
        idx = (self.k + np.arange(size)) % self.pattern.size
        self.k += size
        return self.pattern[idx]
