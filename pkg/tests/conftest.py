import numpy as np
import pytest

from riskshare.space import belief_from_block_density, reference_belief, uniform_space


@pytest.fixture
def halves():
    """Uniform 4-atom space with blocks A, A, B, B and dQ/dP = 1/2 on A, 3/2 on B."""
    sp = uniform_space(4, labels=["A", "A", "B", "B"])
    return sp, reference_belief(sp), belief_from_block_density(sp, {"A": 0.5, "B": 1.5})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion and assert it."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
