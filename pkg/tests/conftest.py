import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_cusum(incs):
    """max over 0 <= nu < n of sum(incs[nu:n]) for every n (non-empty windows)."""
    out = []
    for n in range(1, len(incs) + 1):
        out.append(max(sum(incs[nu:n]) for nu in range(n)))
    return out


def brute_tecusum(incs):
    """max over 0 <= nu <= N <= n of sum(incs[nu:N]) for every n (empty window allowed)."""
    out = []
    best = 0.0
    for n in range(1, len(incs) + 1):
        for nu in range(n):
            best = max(best, sum(incs[nu:n]))
        out.append(best)
    return out


# acceptance report -------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
