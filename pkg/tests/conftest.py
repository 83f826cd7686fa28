import numpy as np
import pytest

from current_lab.lattice import GSBlock, ModelSpec, make_torus
from current_lab.tables import TwoPointTable

SEED = 20261014


@pytest.fixture(scope="session")
def seed():
    return SEED


@pytest.fixture(scope="session")
def exact_2d_table():
    return TwoPointTable.from_exact(ModelSpec(make_torus(2, 4), 0.3))


@pytest.fixture(scope="session")
def exact_gs_table():
    return TwoPointTable.from_exact(ModelSpec(make_torus(2, 3), 0.25, GSBlock(3, 1.0, 0.5)))


@pytest.fixture(scope="session")
def free_table():
    """β = 0 Ising: S = δ_0."""
    vals = np.zeros((8, 8))
    vals[0, 0] = 1.0
    return TwoPointTable((8, 8), vals, None, 0.0)


ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def record():
    """Store one verdict line per acceptance criterion for the terminal summary."""

    def put(name: str, passed: bool, detail: str) -> None:
        ACCEPTANCE[name] = (bool(passed), detail)
        print(f"{name}: {'PASS' if passed else 'FAIL'} {detail}")

    return put


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda k: int(k.split()[-1])):
        passed, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {'PASS' if passed else 'FAIL'} {detail}")
