import json
from pathlib import Path

import numpy as np
import pytest

from fdkp_waves.grid_spectral import Field, Grid2D
from fdkp_waves.solver import SolverConfig, solve

FIXTURES = Path(__file__).parent / "fixtures"
BETA = 7.0 / 3.0

# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        passed, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def oracle():
    return json.loads((FIXTURES / "lump_oracle.json").read_text())


@pytest.fixture(scope="session")
def derived():
    return json.loads((FIXTURES / "derived_values.json").read_text())


@pytest.fixture(scope="session")
def kp_grid():
    return Grid2D(512, 512, 100.0, 100.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_field(grid, rng, decay=1.0, support=None):
    """Smooth random zero-x-mean field (optionally restricted to a support mask)."""
    shape = grid.spectral_shape
    hat = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    kk = np.sqrt((grid.k1 / (2 * np.pi / grid.lx)) ** 2 + (grid.k2 / (2 * np.pi / grid.ly)) ** 2)
    hat *= np.exp(-decay * kk / 4.0)
    hat[0, :] = 0.0
    if support is not None:
        hat = hat * support
    return Field.from_hat(grid, hat)


@pytest.fixture(scope="session")
def kp_nehari(kp_grid):
    return solve(SolverConfig(method="nehari_pg", target="kp0"), kp_grid)


@pytest.fixture(scope="session")
def kp_petviashvili(kp_grid):
    return solve(SolverConfig(method="petviashvili", target="kp0"), kp_grid)


@pytest.fixture(scope="session")
def direct_nehari(kp_grid):
    return solve(SolverConfig(method="nehari_pg", target="fdkp_direct", eps=0.1), kp_grid)


@pytest.fixture(scope="session")
def direct_petviashvili(kp_grid):
    return solve(SolverConfig(method="petviashvili", target="fdkp_direct", eps=0.1), kp_grid)


@pytest.fixture(scope="session")
def reduced_nehari(kp_grid):
    return solve(SolverConfig(method="nehari_pg", target="fdkp_reduced", eps=0.1), kp_grid)
