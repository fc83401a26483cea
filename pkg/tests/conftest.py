import numpy as np
import pytest

from yukawalab import hartree
from yukawalab.model import CutoffSpec, ModelParams, build_grids, make_test_dictionary, scatter_params

# criterion number -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def grids():
    return build_grids(ModelParams())


@pytest.fixture(scope="session")
def small_grids():
    return build_grids(ModelParams(box_half_length=8.0, grid_size=64))


@pytest.fixture(scope="session")
def free_grids():
    return build_grids(ModelParams(cutoff=CutoffSpec(amplitude=0.0)))


@pytest.fixture(scope="session")
def scatter_grids():
    return build_grids(scatter_params())


@pytest.fixture(scope="session")
def dictionary(grids):
    return make_test_dictionary(grids)


@pytest.fixture(scope="session")
def scatter_dictionary(scatter_grids):
    return make_test_dictionary(scatter_grids)


@pytest.fixture(scope="session")
def minimizer_05(grids):
    return hartree.minimize(grids, 0.5)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
