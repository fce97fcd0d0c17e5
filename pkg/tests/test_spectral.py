import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from scatterlab.errors import DomainError, RangeError
from scatterlab.spectral import (
    BoundaryMassWarning,
    FourierInterpolant,
    Grid,
    GridState,
    dft,
    dump_state,
    expectation_H0,
    far_field_extract,
    free_propagate,
    free_resolvent,
    free_resolvent_boundary,
    idft,
    load_state,
    plancherel_integral,
    spectral_density,
    spectral_trace,
    state_to_csv,
)


def gaussian(grid, centre=0.0, sigma=1.0, k0=0.0):
    X = grid.mesh()
    c = np.broadcast_to(np.asarray(centre, float), (grid.dim,))
    kk = np.broadcast_to(np.asarray(k0, float), (grid.dim,))
    v = np.exp(sum(-((x - a) ** 2) / (2 * sigma**2) + 1j * k * x for x, a, k in zip(X, c, kk)))
    return GridState(grid, v).normalized()


def random_state(grid, seed):
    rng = np.random.default_rng(seed)
    return GridState(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))


# ------------------------------------------------------------------- grid

def test_dual_lattice():
    g = Grid(2, 64, 5.0, hbar=0.7)
    assert g.dx * g.dxi * g.points == pytest.approx(2 * math.pi * g.hbar)
    assert g.xi[0] == pytest.approx(-math.pi * g.hbar / g.dx)
    assert g.xi[-1] < math.pi * g.hbar / g.dx


def test_grid_validation():
    with pytest.raises(DomainError):
        Grid(1, 100, 1.0)
    with pytest.raises(DomainError):
        Grid(7, 2, 1.0)
    with pytest.raises(DomainError):
        Grid(1, 64, -1.0)


# -------------------------------------------------------------------- dft

def test_gaussian_self_dual():
    g = Grid(1, 256, 20.0)
    psi = GridState(g, math.pi**-0.25 * np.exp(-g.x**2 / 2))
    p = dft(psi)
    np.testing.assert_allclose(p.values, math.pi**-0.25 * np.exp(-g.xi**2 / 2), atol=1e-14)


@pytest.mark.parametrize("dim,n", [(1, 128), (2, 32), (3, 16)])
def test_plancherel_and_inverse(dim, n):
    g = Grid(dim, n, 3.0, hbar=1.3)
    psi = random_state(g, dim)
    p = dft(psi)
    assert p.rep == "p"
    assert p.norm() == pytest.approx(psi.norm(), rel=1e-12)
    np.testing.assert_allclose(idft(p).values, psi.values, atol=1e-12 * np.abs(psi.values).max())
    np.testing.assert_allclose(dft(idft(p)).values, p.values, atol=1e-12 * np.abs(p.values).max())


# ------------------------------------------------------------ propagation

def test_propagate_zero_time_is_identity():
    g = Grid(2, 32, 6.0)
    psi = gaussian(g)
    np.testing.assert_allclose(free_propagate(psi, 0.0).values, psi.values, atol=1e-14)


def test_gaussian_closed_form():
    g = Grid(1, 1024, 40.0)
    psi = GridState(g, math.pi**-0.25 * np.exp(-g.x**2 / 2))
    t = 2.0
    out = free_propagate(psi, t)
    exact = (math.pi * (1 + t * t)) ** -0.5 * np.exp(-g.x**2 / (1 + t * t))
    assert np.max(np.abs(np.abs(out.values) ** 2 - exact)) <= 1e-8


def test_group_law():
    g = Grid(2, 64, 12.0)
    psi = gaussian(g, sigma=1.2, k0=[0.5, -0.3])
    a = free_propagate(free_propagate(psi, 0.7, check=False), 1.1, check=False)
    b = free_propagate(psi, 1.8, check=False)
    assert (a - b).norm() <= 1e-11


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(0.3, 3.0), st.integers(0, 1000))
def test_norm_and_energy_conserved(t, mass, seed):
    g = Grid(1, 128, 10.0)
    psi = random_state(g, seed).normalized()
    out = free_propagate(psi, t, mass, check=False)
    assert out.norm() == pytest.approx(1.0, abs=1e-12)
    e0 = expectation_H0(psi, mass)
    assert expectation_H0(out, mass) == pytest.approx(e0, rel=1e-10)


def test_stone_first_order():
    g = Grid(1, 512, 30.0)
    psi = gaussian(g, k0=1.0)
    t = 0.5
    base = free_propagate(psi, t)
    H0psi = idft(GridState(g, dft(base).values * g.kinetic(), "p"))
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        diff = (free_propagate(psi, t + h) - base) * (1 / h)
        errs.append((diff + H0psi * 1j).norm())
    # O(h): halving h halves the error
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


def test_boundary_warning():
    g = Grid(1, 256, 10.0)
    psi = gaussian(g, centre=8.0)
    with pytest.warns(BoundaryMassWarning):
        free_propagate(psi, 0.1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        free_propagate(gaussian(g), 0.1)


# ---------------------------------------------------------- spectral trace

def test_trace_one_dim():
    g = Grid(1, 256, 20.0)
    psi = gaussian(g, centre=0.7, sigma=1.3, k0=0.4)
    lam = 0.8
    tr = spectral_trace(psi, lam)
    k = math.sqrt(2 * lam)
    # direct non-uniform Fourier sum as the oracle
    nudft = lambda xi: np.sum(np.exp(-1j * xi * g.x) * psi.values) * g.dx / math.sqrt(2 * math.pi)
    np.testing.assert_allclose(tr.values, [(2 * lam) ** -0.25 * nudft(k), (2 * lam) ** -0.25 * nudft(-k)], rtol=1e-12)
    np.testing.assert_allclose(tr.directions[:, 0], [1, -1])


def test_trace_disjoint_support():
    g = Grid(2, 128, 24.0)
    psi = gaussian(g, sigma=3.0, k0=[3.0, 0.0])  # momentum spread 1/3 around |xi| = 3
    tr = spectral_trace(psi, 0.1)  # sphere radius ~0.45
    assert np.max(np.abs(tr.values)) < 1e-10


def test_trace_out_of_band():
    g = Grid(1, 64, 10.0)
    with pytest.raises(RangeError):
        spectral_trace(gaussian(g), 200.0)
    with pytest.raises(DomainError):
        spectral_trace(gaussian(g), -1.0)


def test_trace_rejects_non_unit_direction():
    g = Grid(2, 32, 8.0)
    with pytest.raises(DomainError):
        spectral_trace(gaussian(g), 0.5, directions=[[1.0, 0.1]])


@pytest.mark.parametrize(
    "dim,n,L,sigma",
    [(1, 256, 20.0, 1.0), (2, 64, 12.0, 1.2), (3, 32, 10.0, 1.5)],
)
def test_polar_plancherel(dim, n, L, sigma):
    g = Grid(dim, n, L)
    psi = gaussian(g, centre=0.4, sigma=sigma, k0=0.3)
    assert plancherel_integral(psi) == pytest.approx(1.0, abs=1e-6)


def test_density_positive_real():
    g = Grid(2, 64, 12.0)
    psi = gaussian(g, sigma=1.2, k0=[0.6, 0.2])
    d = spectral_density(psi, psi, 0.7)
    assert d.real > 0
    assert abs(d.imag) < 1e-14


def test_density_integrates_to_inner_product():
    g = Grid(1, 256, 20.0)
    f = gaussian(g, centre=0.5, k0=0.7)
    h = gaussian(g, centre=-0.3, sigma=1.4, k0=0.2)
    lam, w = np.polynomial.legendre.leggauss(60)
    # integrate in rho on [0, 12]
    rho = 6 * (lam + 1)
    total = sum(wi * 6 * r * spectral_density(f, h, r * r / 2) for r, wi in zip(rho, w))
    assert total == pytest.approx(f.inner(h), abs=1e-6)


def _radial_density_oracle(h, lam):
    # m = 3: density 4 pi rho |h(rho)|^2 with rho = sqrt(2 lam); h normalised radially
    norm = integrate.quad(lambda r: 4 * math.pi * r * r * abs(h(r)) ** 2, 0, np.inf)[0]
    r = math.sqrt(2 * lam)
    return 4 * math.pi * r * abs(h(r)) ** 2 / norm


@pytest.mark.parametrize("lam", [0.3, 1.0, 2.2])
def test_density_radial_gaussian(lam):
    g = Grid(3, 32, 8.0)
    psi = GridState.from_function(g, lambda x, y, z: np.exp(-(x * x + y * y + z * z) / 2)).normalized()
    oracle = _radial_density_oracle(lambda r: math.exp(-r * r / 2), lam)
    # closed form 4 pi sqrt(2 lam) pi^{-3/2} e^{-2 lam}
    assert oracle == pytest.approx(4 * math.pi * math.sqrt(2 * lam) * math.pi**-1.5 * math.exp(-2 * lam), rel=1e-10)
    assert spectral_density(psi, psi, lam).real == pytest.approx(oracle, rel=1e-6)


@pytest.mark.parametrize("lam", [0.5, 1.5])
def test_density_radial_node(lam):
    # |x|^2 e^{-|x|^2/2} has Fourier profile (3 - rho^2) e^{-rho^2/2}
    g = Grid(3, 32, 9.0)
    psi = GridState.from_function(g, lambda x, y, z: (x * x + y * y + z * z) * np.exp(-(x * x + y * y + z * z) / 2))
    psi = psi.normalized()
    oracle = _radial_density_oracle(lambda r: (3 - r * r) * math.exp(-r * r / 2), lam)
    assert spectral_density(psi, psi, lam).real == pytest.approx(oracle, rel=1e-6)


# --------------------------------------------------------------- resolvent

@pytest.fixture(scope="module")
def packet_1d():
    g = Grid(1, 2048, 100.0)
    # momentum 2, spread 1/3: Fourier transform negligible near 0
    return GridState(g, np.exp(-((g.x - 1) ** 2) / 18 + 2j * g.x)).normalized()


@pytest.fixture(scope="module")
def boundary_values(packet_1d):
    mu = 1.7
    return mu, free_resolvent_boundary(packet_1d, mu, 1), free_resolvent_boundary(packet_1d, mu, -1)


def test_resolvent_imaginary_part(packet_1d, boundary_values):
    mu, rp, rm = boundary_values
    lhs = (rp - rm).inner(packet_1d) / (2j * math.pi)
    assert lhs == pytest.approx(spectral_density(packet_1d, packet_1d, mu), abs=1e-4)
    assert rp.meta["residual"] < 1e-8


def test_resolvent_matches_kernel(packet_1d, boundary_values):
    # 1-d outgoing kernel (i/k) e^{ik|x-y|} by direct quadrature
    mu, rp, _ = boundary_values
    g = packet_1d.grid
    k = math.sqrt(2 * mu)
    idx = np.arange(0, g.points, 64)
    exact = np.array([np.sum((1j / k) * np.exp(1j * k * np.abs(g.x[i] - g.x)) * packet_1d.values) * g.dx for i in idx])
    np.testing.assert_allclose(rp.values[idx], exact, atol=1e-3 * np.abs(exact).max())


def test_resolvent_epsilon_limit(packet_1d, boundary_values):
    mu, rp, _ = boundary_values
    g = packet_1d.grid
    w = 1 / np.sqrt(1 + g.x**2)
    dist = []
    for k in range(1, 6):
        re = free_resolvent(packet_1d, mu + 1j * 2.0**-k)
        dist.append(np.sqrt(np.sum(np.abs(w * (re.values - rp.values)) ** 2) * g.dx))
    assert all(b < a for a, b in zip(dist, dist[1:]))


def test_resolvent_without_crossing():
    g = Grid(2, 128, 24.0)
    psi = gaussian(g, sigma=3.0, k0=[3.0, 0.0])
    mu = 0.5  # sphere radius 1, packet lives near |xi| = 3
    idx = np.random.default_rng(0).choice(g.points**2, 48, replace=False)
    pts = g.points_array()[idx]
    got = free_resolvent_boundary(psi, mu, 1, points=pts)
    plain = free_resolvent(psi, mu).values.ravel()[idx]
    np.testing.assert_allclose(got, plain, atol=1e-6 * np.abs(plain).max())


def test_resolvent_errors(packet_1d):
    with pytest.raises(DomainError):
        free_resolvent_boundary(packet_1d, 1.0, sign=0)
    with pytest.raises(RangeError):
        free_resolvent_boundary(packet_1d, 1e4)


# --------------------------------------------------------------- far field

@pytest.fixture(scope="module")
def bump_3d():
    g = Grid(3, 64, 32.0)
    K = g.momentum_mesh()
    r = np.sqrt(sum(k * k for k in K))
    prof = np.exp(-((r - 1) ** 2) / (2 * 0.2**2))
    return g, K, r, prof


@pytest.mark.slow
def test_far_field_both_signs(bump_3d):
    g, K, r, prof = bump_3d
    psi = FourierInterpolant(idft(GridState(g, prof * (1 + 0.5 * K[2] / np.maximum(r, 1e-12)), "p")))
    omega = np.array([0.0, 0.6, 0.8])
    radii = [4, 8, 16, 24, 30]
    for sign in (1, -1):
        ff = far_field_extract(psi, 0.5, omega, radii, sign=sign)
        ref = spectral_trace(psi, 0.5, directions=[sign * omega]).values[0]
        err = np.abs(ff.values / ref - 1)
        assert np.all(np.diff(err) < 0)
        assert err[-1] <= 0.05
        assert ff.estimate == ff.values[-1]


@pytest.mark.slow
def test_far_field_zero_trace(bump_3d):
    g, K, r, prof = bump_3d
    omega = np.array([0.0, 0.0, 1.0])
    # Fourier transform vanishes along +omega
    psi = idft(GridState(g, prof * (1 - K[2] / np.maximum(r, 1e-12)), "p"))
    ff = far_field_extract(psi, 0.5, omega, [8, 16, 30])
    scale = abs(spectral_trace(psi, 0.5, directions=[-omega]).values[0])
    assert abs(ff.estimate) < 0.05 * scale
    assert abs(ff.values[-1]) < abs(ff.values[0])


def test_far_field_domain():
    g = Grid(2, 32, 8.0)
    psi = gaussian(g, sigma=1.5, k0=[1.0, 0.0])
    with pytest.raises(RangeError):
        far_field_extract(psi, 0.5, [1.0, 0.0], [2.0, 9.0])
    with pytest.raises(DomainError):
        far_field_extract(gaussian(Grid(1, 64, 8.0)), 0.5, [1.0], [1.0])


# ----------------------------------------------------------- serialisation

def test_dump_roundtrip(tmp_path):
    g = Grid(2, 16, 3.5, hbar=0.9)
    psi = random_state(g, 4)
    path = tmp_path / "s.bin"
    dump_state(psi, path)
    raw = path.read_bytes()
    assert len(raw) == 32 + 16 * 16 * 16
    back = load_state(path)
    assert back.grid == g
    np.testing.assert_array_equal(back.values, psi.values)


def test_csv_export(tmp_path):
    g = Grid(2, 4, 1.0)
    psi = random_state(g, 1)
    path = tmp_path / "s.csv"
    state_to_csv(psi, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "index0,index1,re,im"
    assert len(lines) == 17
    i0, i1, re, im = lines[6].split(",")
    assert complex(float(re), float(im)) == psi.values[int(i0), int(i1)]
