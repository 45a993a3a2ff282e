import numpy as np
import pytest

from multisqueeze.config import ExperimentConfig
from multisqueeze.hg_modes import hermite_gauss_basis, make_grid
from multisqueeze.pipeline import build_model


@pytest.fixture(scope="session")
def default_config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def default_model(default_config):
    return build_model(default_config)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(-12e-3, 12e-3, 241)


@pytest.fixture(scope="session")
def small_basis(small_grid):
    return hermite_gauss_basis(small_grid, 1e-3, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict: ``criterion(number, title, ok, detail)``.

    Every verdict is echoed as a ``PASS``/``FAIL`` line in the terminal summary.
    """
    verdicts = request.config.stash.setdefault(_VERDICTS, [])

    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" ({detail})" if detail else "")
        verdicts.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash.get(_VERDICTS, [])
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in sorted(verdicts, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
