import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scatterlab import _accel
from scatterlab.kernels import (
    expsum_numba,
    expsum_numpy,
    lagrange_weights_numpy,
    lattice_interp_numba,
    lattice_interp_numpy,
)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0, exclude_max=True))
def test_lagrange_weights_partition_of_unity(u):
    w = lagrange_weights_numpy(np.array([[u]]))[0, 0]
    assert abs(w.sum() - 1.0) < 1e-13


def test_interp_exact_for_degree_seven():
    # 8-point Lagrange reproduces polynomials of degree <= 7 away from the edges
    x = np.arange(40) * 0.25 - 5.0
    poly = lambda t: 0.3 * t**7 - t**5 + 2 * t**2 - 1  # noqa: E731
    pts = np.random.default_rng(0).uniform(-3.0, 3.0, (64, 1))
    got = lattice_interp_numpy(poly(x).astype(complex), np.array([-5.0]), np.array([0.25]), pts)
    np.testing.assert_allclose(got.real, poly(pts[:, 0]), rtol=1e-10, atol=1e-9)


@pytest.mark.parametrize("dim,n", [(1, 64), (2, 24), (3, 12)])
def test_interp_backends_agree(dim, n):
    rng = np.random.default_rng(dim)
    table = rng.normal(size=(n,) * dim) + 1j * rng.normal(size=(n,) * dim)
    origin = np.full(dim, -1.0)
    step = np.full(dim, 0.1)
    pts = rng.uniform(-1.2, -1.0 + n * 0.1, (200, dim))
    a = lattice_interp_numpy(table, origin, step, pts)
    b = lattice_interp_numba(table, origin, step, pts)
    assert np.max(np.abs(a - b)) < 1e-12 * np.abs(table).max()


def test_expsum_matches_direct_sum():
    rng = np.random.default_rng(1)
    x = rng.uniform(-5, 5, (50, 2))
    k = rng.uniform(-2, 2, (30, 2))
    c = rng.normal(size=30) + 1j * rng.normal(size=30)
    direct = np.array([np.sum(c * np.exp(1j * (k @ xp))) for xp in x])
    np.testing.assert_allclose(expsum_numpy(x, k, c), direct, atol=1e-12)
    np.testing.assert_allclose(expsum_numba(x, k, c), direct, atol=1e-12)


def test_backend_reports_numba():
    assert _accel.backend() == ("numba" if _accel.HAVE_NUMBA else "numpy")


def test_env_flag_selects_numpy_fallback():
    code = (
        "import numpy as np\n"
        "from scatterlab import _accel\n"
        "from scatterlab.kernels import expsum, lattice_interp\n"
        "from scatterlab.scattering import OrbitSolver, classical_orbit\n"
        "from scatterlab.potentials import PairPotential\n"
        "print(_accel.backend())\n"
        "s = OrbitSolver(PairPotential('soft-coulomb', {'Z': 0.2}, a=1.0), rho=0.25)\n"
        "q, p = classical_orbit(s, 40.0, 0.0, [[6.0, 1.0]], [[0.8, 0.3]])\n"
        "print(repr(float(q[0, 0])), repr(float(p[0, 1])))\n"
        "print(abs(expsum([[1.0]], [[2.0]], [1.0])[0] - np.exp(2j)) < 1e-15)\n"
    )
    env = dict(os.environ, SCATTERLAB_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    lines = out.stdout.split()
    assert lines[0] == "numpy" and lines[-1] == "True"
    from scatterlab.potentials import PairPotential
    from scatterlab.scattering import OrbitSolver, classical_orbit

    s = OrbitSolver(PairPotential("soft-coulomb", {"Z": 0.2}, a=1.0), rho=0.25)
    q, p = classical_orbit(s, 40.0, 0.0, [[6.0, 1.0]], [[0.8, 0.3]])
    assert abs(float(lines[1]) - q[0, 0]) < 1e-10 and abs(float(lines[2]) - p[0, 1]) < 1e-10
