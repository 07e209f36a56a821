import logging

import numpy as np
import pytest

from esqlab.kernels import make_cutoff


@pytest.fixture(autouse=True)
def _quiet_logs():
    logging.getLogger("esqlab").setLevel(logging.ERROR)
    yield


@pytest.fixture(scope="session")
def cutoff():
    return make_cutoff("exp-sqrt", 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(2024))


_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def verdict(request):
    """Print and record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash[_LINES]

    def emit(k: int, ok: bool, detail: str) -> bool:
        line = f"Criterion {k}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        lines.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
