import numpy as np
import pytest

from gaitrobust.skeldata import synthesize_corpus


@pytest.fixture(scope="session")
def small_corpus():
    """3 subjects x 30 windows; enough for quick training checks."""
    return synthesize_corpus(num_subjects=3, windows_per_subject=30, videos_per_subject=2, seed=7)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict line, then assert it."""
    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _CRITERIA.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
