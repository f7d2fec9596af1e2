import numpy as np
import pytest

from arts_qkd import ChannelSpec, LognormalFade, Trace, generate

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, description, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {description} {detail}".rstrip())
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def three_packets():
    return Trace([1.0, 2.0, 3.0], [10, 20, 30], [1, 2, 3])


@pytest.fixture(scope="session")
def sim_trace():
    spec = ChannelSpec(10.0, 2.0, 0.03, LognormalFade(1.0, 1.0))
    return generate(spec, 100_000, seed=12345)


def random_trace(rng, n=50):
    v = rng.lognormal(-0.5, 1.0, n)
    s = rng.poisson(8 * v + 2)
    e = rng.binomial(s, 0.1 + 0.3 * np.exp(-v))
    return Trace(v, s, e)
