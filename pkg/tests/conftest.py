import numpy as np
import pytest

from scatterlab.dynamics import Propagator
from scatterlab.potentials import PairPotential
from scatterlab.scattering import OrbitSolver, build_phase_function
from scatterlab.spectral import Grid, GridState


def gaussian_packet(g, x0=0.0, k0=0.0, sigma=1.0):
    return GridState(g, np.exp(-((g.x - x0) ** 2) / (2 * sigma**2) + 1j * k0 * g.x)).normalized()


@pytest.fixture(scope="session")
def coulomb_1d():
    """Weak 1-d soft-Coulomb set-up with a tabulated glued phase (built once)."""
    grid = Grid(1, 1024, 160.0)
    pot = PairPotential("soft-coulomb", {"Z": 0.1}, a=1.0)
    solver = OrbitSolver(pot, rho=0.1)
    phase = build_phase_function(solver, d=1.0, R0=16.0, grid=grid)
    prop = Propagator(grid, pot.radial(np.abs(grid.x)), dt=0.05)
    return {"grid": grid, "potential": pot, "solver": solver, "phase": phase, "prop": prop,
            "packet": gaussian_packet(grid, 0.0, 3.0, 5.0)}


@pytest.fixture(scope="session")
def well_1d():
    """1-d gaussian well on a box large enough for T = 80."""
    grid = Grid(1, 1024, 256.0)
    pot = PairPotential("gaussian", {"V0": -1.0, "width": 1.0})
    prop = Propagator(grid, pot.radial(np.abs(grid.x)), dt=0.05)
    return {"grid": grid, "potential": pot, "prop": prop}


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
