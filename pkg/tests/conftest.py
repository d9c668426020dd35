import numpy as np
import pytest

from mapnet import tensor as T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_tensor(rng, shape, dtype=np.float64, requires_grad=True):
    return T.Tensor(rng.normal(size=shape), requires_grad=requires_grad, dtype=dtype)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance-gate verdict lines past output capture."""
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
