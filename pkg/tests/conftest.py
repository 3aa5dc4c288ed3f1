import numpy as np
import pytest

from qtnspec.ed import build_hamiltonian, low_eigenpairs
from qtnspec.mps import ModelParams

ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def ring8():
    p = ModelParams(L=8)
    return p, low_eigenpairs(build_hamiltonian(p), 10, p)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def report(request):
    """Record one pass/fail line per acceptance criterion; printed again in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def add(n: int, ok: bool, seconds: float, budget: float, detail: str):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  [{seconds:.0f} s, budget {budget:.0f} s]  {detail}"
        lines.append(line)
        print(line)
        return ok

    return add


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
