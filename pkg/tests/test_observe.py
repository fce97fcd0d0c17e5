import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants as sc

from scatterlab.dynamics import position_mean, split_step_propagate
from scatterlab.errors import DomainError
from scatterlab.observe import (
    FiniteModel,
    admissible_states,
    born_cross_section,
    clock_period,
    coulomb_fourier,
    effective_hamiltonian,
    energy_operator_defect,
    local_motion_witness,
    lorentz_factor,
    observed_energy,
    planck_mass,
    planck_time,
    random_states,
    relativistic_correction,
    relativistic_kinetic_operator,
    relativistic_mass,
    relativistic_rutherford,
    rutherford,
    time_energy_uncertainty,
    uncertainty_product,
)
from scatterlab.spectral import Grid, GridState

G1 = Grid(1, 1024, 40.0)


# ---------------------------------------------------------------- position / momentum

def test_gaussian_is_minimal():
    psi = GridState(G1, np.exp(-G1.x**2 / 2)).normalized()
    assert uncertainty_product(psi).product == pytest.approx(0.5, abs=1e-10)


def test_gaussian_minimal_with_hbar():
    g = Grid(1, 1024, 40.0, hbar=0.3)
    psi = GridState(g, np.exp(-g.x**2 / 2 + 2j * g.x)).normalized()
    r = uncertainty_product(psi)
    assert r.product == pytest.approx(0.15, abs=1e-10)
    assert r.p[0] == pytest.approx(0.3 * 2.0, abs=1e-10)  # hbar k


def test_hermite_one():
    # oracle: <x^2> = 3/2 and <p^2> = 3/2 for x exp(-x^2/2)
    psi = GridState(G1, G1.x * np.exp(-G1.x**2 / 2)).normalized()
    r = uncertainty_product(psi)
    assert r.dq == pytest.approx(math.sqrt(1.5), abs=1e-10)
    assert r.product == pytest.approx(1.5, abs=1e-8)


def test_unnormalized_rejected():
    with pytest.raises(DomainError):
        uncertainty_product(GridState(G1, 2 * np.exp(-G1.x**2)))


def test_random_sweep():
    prods = [uncertainty_product(s).product for s in random_states(G1, 100, seed=0)]
    assert min(prods) >= 0.5 - 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 2]))
def test_product_bound_property(seed, dim):
    g = G1 if dim == 1 else Grid(2, 64, 20.0)
    (psi,) = random_states(g, 1, seed=seed)
    assert uncertainty_product(psi).product >= 0.5 - 1e-10


# ---------------------------------------------------------------- time / energy

G3 = Grid(3, 32, 12.0)


@pytest.fixture(scope="module")
def admissible():
    return admissible_states(G3, 50, seed=0)


def test_abs_T_equals_t(admissible):
    for t in (2.0, -3.0):
        assert time_energy_uncertainty(admissible[0], t).abs_T == pytest.approx(abs(t), rel=1e-12)


def test_time_energy_sweep(admissible):
    prods = [time_energy_uncertainty(s, 2.0).product for s in admissible]
    assert min(prods) >= 0.5 - 1e-6


def test_time_energy_needs_admissible():
    psi = GridState(G3, np.exp(-sum(x**2 for x in G3.mesh()) / 2) * np.ones(G3.shape)).normalized()
    with pytest.raises(DomainError):
        time_energy_uncertainty(psi, 1.0)
    with pytest.raises(DomainError):
        time_energy_uncertainty(psi, 0.0)


def test_energy_operator_asymptotics():
    g = Grid(3, 32, 16.0)
    (s,) = admissible_states(g, 1, seed=1, shell=(0.5, 1.2))
    d = energy_operator_defect(s, [2.0, 4.0, 8.0])
    assert np.all(np.diff(d) < 0) and d[-1] < 0.5 * d[0]


# ---------------------------------------------------------------- cross sections

def test_rutherford_value():
    assert rutherford(1.0, 1.0, np.pi / 2) == pytest.approx(0.25)
    assert born_cross_section(coulomb_fourier(1.0), 1.0, np.pi / 2) == pytest.approx(0.25, rel=1e-14)


@pytest.mark.parametrize("mass,hbar", [(1.0, 1.0), (0.5, 1.0), (2.0, 0.7)])
def test_screened_limit(mass, hbar):
    errs = [abs(born_cross_section(coulomb_fourier(1.0, 1.0, k), 1.0, np.pi / 2, mass, hbar) / 0.25 - 1)
            for k in (1e-1, 1e-2, 1e-3)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-2


def test_theta_pi_minimal():
    th = np.linspace(0.1, np.pi, 200)
    v = born_cross_section(coulomb_fourier(2.0, 1.0, 0.1), 3.0, th)
    assert np.argmin(v) == len(th) - 1


def test_forward_divergence_reported():
    with pytest.raises(DomainError, match="diverges"):
        born_cross_section(coulomb_fourier(1.0), 1.0, 0.0)
    assert np.isfinite(born_cross_section(coulomb_fourier(1.0, kappa=0.5), 1.0, 0.0))


def test_relativistic_factor():
    assert relativistic_correction(3.0, 0.0) == 3.0
    assert relativistic_correction(1.0, 0.1) == pytest.approx(0.99, abs=1e-15)
    assert relativistic_correction(relativistic_correction(2.5, 0.0), 0.0) == 2.5
    with pytest.raises(DomainError):
        relativistic_correction(1.0, 1.0)


def test_relativistic_rutherford_reduces():
    # E = m v^2/2 in the small-v limit
    m, v = 1.0, 1e-3
    assert relativistic_rutherford(1.0, m, v, 1.0) == pytest.approx(rutherford(1.0, m * v * v / 2, 1.0), rel=1e-5)


def test_observed_energy_expansion():
    # E' - m v^2/2 = (3/8) m c^2 beta^4 + O(beta^6)
    m, c = 2.0, 1.0
    for v in (1e-1, 1e-2, 1e-3):
        ex = m * c * c * (lorentz_factor(v, c) - 1)
        assert observed_energy(m, v, c) == pytest.approx(ex, rel=1e-12 if v > 1e-2 else 1e-6)
        r = (observed_energy(m, v, c) - m * v * v / 2) / (m * c * c * (v / c) ** 4)
        assert r == pytest.approx(3 / 8, rel=2 * v * v + 1e-9)


# ---------------------------------------------------------------- kinetic / effective Hamiltonians

def test_kinetic_examples():
    g = Grid(1, 64, 10.0)
    K = relativistic_kinetic_operator(g, [1.0], c=1.0)
    assert K[g.points // 2] == 0.0
    assert np.allclose(K, np.sqrt(g.xi**2 + 1) - 1, rtol=1e-13, atol=1e-15)


def test_kinetic_nonrelativistic_limit():
    g = Grid(2, 64, 200.0)
    m, c = np.array([1.0, 3.0]), 10.0
    K = relativistic_kinetic_operator(g, m, c)
    P = np.broadcast_arrays(*g.momentum_mesh())
    nr = P[0] ** 2 / (2 * m[0]) + P[1] ** 2 / (2 * m[1])
    low = (np.abs(P[0]) <= 0.1 * m[0] * c) & (np.abs(P[1]) <= 0.1 * m[1] * c) & (nr > 0)
    rel = np.abs(K[low] - nr[low]) / nr[low]
    assert rel.max() <= 0.01
    bound = np.maximum((P[0][low] / (m[0] * c)) ** 2, (P[1][low] / (m[1] * c)) ** 2)
    assert np.all(rel <= bound + 1e-15)


def test_effective_free_is_kinetic():
    g = Grid(2, 32, 10.0)
    H = effective_hamiltonian(g, [1.0, 2.0], G=0.0, c=5.0)
    assert np.all(H.potential == 0)
    # two clusters: D_1 = -xi, D_2 = xi
    assert np.allclose(H.kinetic, relativistic_kinetic_operator(Grid(2, 32, 10.0), [1.0], 5.0)
                       + relativistic_kinetic_operator(g, [2.0], 5.0), rtol=1e-13)


def test_effective_three_clusters_shape_and_ib():
    g = Grid(2, 32, 10.0)
    H = effective_hamiltonian(g, [1.0, 1.0, 1.0], G=0.5, I_b=lambda x: 0.1 * np.sum(x**2, axis=(-1, -2)))
    assert H.kinetic.shape == g.shape and np.all(np.isfinite(H.potential))
    assert H.kinetic.min() == 0.0


@pytest.fixture(scope="module")
def kepler():
    m, r0, sig, c = 50.0, 10.0, 0.5, 100.0
    mu, omega = m / 2, 1 / 6
    G = omega**2 * r0**3 / (2 * m)  # Kepler: omega^2 r^3 = G (m1 + m2)
    g = Grid(2, 512, 14.0)
    H = effective_hamiltonian(g, [m, m], G, c=c)
    X, Y = g.mesh()
    psi = GridState(g, np.exp(-((X - r0) ** 2 + Y**2) / (2 * sig**2) + 1j * mu * omega * r0 * Y)).normalized()
    prop = H.propagator(0.02)
    ts = np.linspace(0, 6, 13)
    states, s = [psi], psi
    for a, b in zip(ts, ts[1:]):
        s = split_step_propagate(prop, s, b - a, check=False)
        states.append(s)
    return H, ts, states, omega


def test_effective_energy_conserved(kepler):
    H, _, states, _ = kepler
    E0 = H.energy(states[0])
    assert max(abs(H.energy(s) - E0) for s in states) <= 1e-6 * abs(E0)


def test_kepler_frequency(kepler):
    _, ts, states, omega = kepler
    ang = np.unwrap([math.atan2(*position_mean(s)[::-1]) for s in states])
    w = np.polyfit(ts, ang, 1)[0]
    assert w == pytest.approx(omega, rel=0.01)


# ---------------------------------------------------------------- clocks

def test_mass_and_period_laws():
    m0 = 3.0
    assert relativistic_mass(m0, 0.0) == m0
    assert clock_period(m0, 0.0) == pytest.approx(2 * sc.h / (m0 * sc.c**2), rel=1e-15)
    assert relativistic_mass(m0, 0.6 * sc.c) == pytest.approx(1.25 * m0, rel=1e-15)
    assert clock_period(m0, 0.6 * sc.c) / clock_period(m0, 0.0) == pytest.approx(1.25, rel=1e-15)
    with pytest.raises(DomainError):
        clock_period(m0, sc.c)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-30, 1e3), st.floats(0, 0.999))
def test_period_ratio_is_mass_ratio(m0, beta):
    v = beta * sc.c
    assert clock_period(m0, v) / clock_period(m0, 0.0) == pytest.approx(relativistic_mass(m0, v) / m0, rel=1e-15)


def test_planck_lpt():
    assert clock_period(planck_mass(), 0.0) == pytest.approx(2 * planck_time(), rel=1e-12)
    assert planck_time() == pytest.approx(1.35125e-43, rel=1e-4)
    assert planck_mass() * 1e3 == pytest.approx(5.45604e-5, rel=1e-4)


# ---------------------------------------------------------------- local-motion witness

SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def _model(eps):
    return FiniteModel(np.diag([0.0, 1.0]), np.diag([0.0, 2.0]), eps * np.kron(SX, SX))


def test_witness_constant_interaction():
    r = local_motion_witness(FiniteModel(np.diag([0.0, 1.0]), np.diag([0.0, 2.0]), 0.7 * np.eye(4)))
    assert r.value <= 1e-12 and r.commutator <= 1e-12


def test_witness_coupled_oracle():
    # closed form: ground state mixes |00> and |11> with angle tan(2a) = 2 eps / 3
    eps = 0.1
    a = 0.5 * math.atan2(2 * eps, 3.0)
    r = local_motion_witness(_model(eps))
    assert r.value > 1e-6
    assert r.value == pytest.approx(abs(math.sin(a)), rel=1e-12)


def test_witness_linear_in_eps():
    v = [local_motion_witness(_model(e)).value for e in (0.1, 0.05, 0.025)]
    ratios = [v[0] / v[1], v[1] / v[2]]
    assert all(abs(q - 2.0) < 0.02 for q in ratios)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_witness_zero_iff_commuting(seed):
    rng = np.random.default_rng(seed)
    nL, nE = rng.integers(2, 5, 2)
    sym = lambda n: (lambda a: a + a.T)(rng.normal(size=(n, n)))
    HL = np.diag(np.sort(rng.normal(size=nL)) + np.arange(nL))
    HE = sym(nE)
    I = np.kron(np.eye(nL), sym(nE)) if rng.random() < 0.5 else 0.3 * sym(nL * nE)
    r = local_motion_witness(FiniteModel(HL, HE, I))
    assert (r.value <= 1e-10) == (r.commutator <= 1e-10)


def test_witness_degenerate_flag():
    r = local_motion_witness(FiniteModel(np.diag([0.0, 1.0]), np.zeros((2, 2)), np.zeros((4, 4))))
    assert r.degenerate and r.value <= 1e-12


def test_model_validation():
    with pytest.raises(DomainError):
        FiniteModel(np.array([[0, 1], [0, 0.0]]), np.eye(2), np.eye(4))
    with pytest.raises(DomainError):
        FiniteModel(np.eye(2), np.eye(2), np.eye(3))
