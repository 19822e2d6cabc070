import numpy as np
import pytest

# A column shaped like the worked example: 5 is most frequent, then 1, 8, 4,
# with the rest ordered 3, 7, 6, 2 so the permuted dimension reads E,A,H,D,C,G,F,B.
EXAMPLE_COUNTS = {5: 8, 1: 7, 8: 6, 4: 5, 3: 4, 7: 3, 6: 2, 2: 1}
EXAMPLE_DIM = np.array(list("ABCDEFGH"))

_ACCEPTANCE_LINES = []


@pytest.fixture
def example_fact():
    values = np.repeat(list(EXAMPLE_COUNTS), list(EXAMPLE_COUNTS.values()))
    np.random.default_rng(7).shuffle(values)
    return values.astype(np.uint32)


@pytest.fixture
def report():
    """Record one acceptance verdict line; printed in the terminal summary."""

    def _report(criterion, passed, detail=""):
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
