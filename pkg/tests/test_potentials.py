import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scatterlab.coords import ClusterDecomposition, all_decompositions, clustered_frame, jacobi_frame
from scatterlab.errors import ConfigError, DomainError
from scatterlab.potentials import (
    PairPotential,
    PotentialAssembly,
    cluster_split,
    decay_check,
    evaluate_total,
)
from scatterlab.spectral import Grid

RADII = np.geomspace(2.0, 200.0, 16)


def full_assembly(masses, d=3, seed=0):
    rng = np.random.default_rng(seed)
    f = jacobi_frame(masses, d=d)
    kinds = [
        lambda: PairPotential("gaussian", {"V0": rng.uniform(-2, 2), "width": rng.uniform(0.5, 2)}),
        lambda: PairPotential("yukawa", {"g": rng.uniform(-1, 1), "kappa": rng.uniform(0.2, 2)}, a=0.3),
        lambda: PairPotential("soft-coulomb", {"Z": rng.uniform(-1, 1)}, a=0.5),
    ]
    pairs = {(i, j): kinds[(i + j) % 3]() for i in range(1, f.N + 1) for j in range(i + 1, f.N + 1)}
    return PotentialAssembly(f, pairs)


# ----------------------------------------------------------- evaluate_total

def test_zero_potentials():
    f = jacobi_frame([1, 2, 3], d=2)
    asm = PotentialAssembly(f, {(1, 2): PairPotential("zero"), (2, 3): PairPotential("zero")})
    assert np.all(asm.total(np.random.default_rng(0).normal(size=(5, 2, 2))) == 0)
    assert evaluate_total(PotentialAssembly(f, {}), np.zeros((2, 2))) == 0


def test_gaussian_peak():
    asm = PotentialAssembly(jacobi_frame([1, 1], d=3), {(1, 2): PairPotential("gaussian", {"V0": 1.7})})
    assert asm.total(np.zeros((1, 3))) == pytest.approx(1.7)


def test_single_pair_matches_particle_evaluation():
    masses = [1.0, 2.0, 0.5]
    f = jacobi_frame(masses, d=3)
    pot = PairPotential("gaussian", {"V0": -1.3, "width": 1.5})
    asm = PotentialAssembly(f, {(1, 3): pot})
    X = np.random.default_rng(4).normal(size=(3, 3))
    X -= (f.masses @ X) / f.total_mass
    direct = -1.3 * math.exp(-np.sum((X[2] - X[0]) ** 2) / 1.5**2)
    assert asm.total(f.jacobi(X)) == pytest.approx(direct, rel=1e-13)


def test_soft_core_finite_at_origin():
    pot = PairPotential("inverse-power", {"C": 1.0, "power": 2.0}, a=0.25)
    assert pot(np.zeros(3)) == pytest.approx(16.0)
    sc = PairPotential("soft-coulomb", {"Z": 1.0})
    with pytest.raises(ConfigError):
        sc(np.zeros(3))
    g = Grid(1, 64, 8.0)
    assert sc.resolved(g.dx).a == pytest.approx(2 * g.dx)
    assert np.isfinite(sc.resolved(g.dx)(np.zeros(1)))


def test_invalid_specs():
    with pytest.raises(ConfigError):
        PairPotential("morse", {})
    with pytest.raises(ConfigError):
        PairPotential("yukawa", {"g": 1.0})
    with pytest.raises(ConfigError):
        PairPotential("gaussian", {"V0": 1.0, "depth": 2.0})
    with pytest.raises(DomainError):
        PotentialAssembly(jacobi_frame([1, 1]), {(1, 3): PairPotential("zero")})


def test_classification():
    assert PairPotential("soft-coulomb", {"Z": 1}).is_long
    assert not PairPotential("gaussian", {"V0": 1}).is_long
    assert PairPotential("inverse-power", {"C": 1, "power": 0.5}).is_long
    assert not PairPotential("inverse-power", {"C": 1, "power": 3}).is_long
    p = PairPotential("soft-coulomb", {"Z": 0.3}, a=1.0)
    r = np.array([[2.0, 1.0]])
    assert p.short(r) == 0 and p.long(r) == p(r)


@pytest.mark.parametrize(
    "pot",
    [
        PairPotential("soft-coulomb", {"Z": 0.7}, a=0.8),
        PairPotential("gaussian", {"V0": -1.1, "width": 1.3}),
        PairPotential("yukawa", {"g": 0.4, "kappa": 0.6}, a=0.2),
        PairPotential("inverse-power", {"C": 0.5, "power": 0.7}, a=0.5),
    ],
)
def test_radial_derivative(pot):
    r = np.linspace(0.1, 6, 40)
    h = 1e-5
    fd = (pot.radial(r + h) - pot.radial(r - h)) / (2 * h)
    np.testing.assert_allclose(pot.radial_derivative(r), fd, rtol=1e-6, atol=1e-10)


def test_grad_long_jacobi():
    f = jacobi_frame([1.0, 2.0, 3.0], d=2)
    asm = PotentialAssembly(f, {(1, 2): PairPotential("soft-coulomb", {"Z": 0.5}, a=1.0),
                                (2, 3): PairPotential("soft-coulomb", {"Z": -0.2}, a=0.7)})
    x = np.random.default_rng(1).normal(size=(2, 2))
    g = asm.grad_long(x)
    h = 1e-6
    for k in range(2):
        for a in range(2):
            e = np.zeros((2, 2))
            e[k, a] = h
            assert g[k, a] == pytest.approx((asm.long(x + e) - asm.long(x - e)) / (2 * h), rel=1e-6, abs=1e-10)


def test_on_grid_bounded():
    f = jacobi_frame([1.0, 1.0, 1.0], d=1)
    g = Grid(2, 64, 10.0)
    asm = PotentialAssembly(f, {(1, 2): PairPotential("soft-coulomb", {"Z": -1.0}),
                                (1, 3): PairPotential("inverse-power", {"C": 1.0, "power": 2})}).resolved(g.dx)
    V = asm.on_grid(g)
    assert V.shape == g.shape
    assert np.all(np.isfinite(V)) and np.isrealobj(V)


# ------------------------------------------------------------ cluster_split

def test_single_cluster_has_no_interaction():
    asm = full_assembly([1, 2, 3])
    Vb, Ib = cluster_split(asm, ClusterDecomposition.single(3))
    x = np.random.default_rng(2).normal(size=(4, 2, 3))
    assert np.all(Ib(x) == 0)
    np.testing.assert_allclose(Vb(x), asm.total(x), rtol=1e-14)


def test_singletons_have_no_internal_part():
    asm = full_assembly([1, 2, 3])
    Vb, Ib = cluster_split(asm, ClusterDecomposition.singletons(3))
    x = np.random.default_rng(3).normal(size=(4, 2, 3))
    assert np.all(Vb(x) == 0)


def test_three_body_intercluster_terms():
    asm = full_assembly([1, 2, 3], seed=5)
    _, Ib = cluster_split(asm, ClusterDecomposition.parse("{1,2}|{3}"))
    x = np.random.default_rng(6).normal(size=(7, 2, 3))
    np.testing.assert_allclose(Ib(x), asm.pair_term((1, 3), x) + asm.pair_term((2, 3), x), rtol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.data(), st.integers(0, 10_000))
def test_split_sums_to_total(N, data, seed):
    rng = np.random.default_rng(seed)
    asm = full_assembly(list(rng.uniform(0.3, 3, size=N)), seed=seed)
    b = data.draw(st.sampled_from(all_decompositions(N)))
    Vb, Ib = cluster_split(asm, b)
    x = rng.normal(size=(10, N - 1, 3)) * 2
    np.testing.assert_allclose(Vb(x) + Ib(x), asm.total(x), rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 5), st.data(), st.integers(0, 10_000))
def test_internal_part_ignores_intercluster_coordinates(N, data, seed):
    rng = np.random.default_rng(seed)
    asm = full_assembly(list(rng.uniform(0.3, 3, size=N)), seed=seed)
    b = data.draw(st.sampled_from(all_decompositions(N)))
    cf = clustered_frame(asm.frame, b)
    Vb, _ = cluster_split(asm, b)
    x = rng.normal(size=(N - 1, 3))
    xb, xB = cf.split(x)
    moved = cf.join(xb + rng.normal(size=xb.shape) * 3, xB)
    assert Vb(moved) == pytest.approx(Vb(x), abs=1e-12)


# -------------------------------------------------------------- decay_check

def test_gaussian_decay_steeper_than_any_power():
    rep = decay_check(PairPotential("gaussian", {"V0": 1.0}, delta=5.0), RADII)
    assert rep.passed and rep.fitted_exponent == -math.inf


def test_screened_coulomb_passes():
    rep = decay_check(PairPotential("screened-coulomb", {"Z": 1.0, "kappa": 0.5}, a=0.1, delta=3.0), RADII)
    assert rep.passed
    assert rep.fitted_exponent < -4


def test_pure_coulomb_as_short_fails():
    pot = PairPotential("inverse-power", {"C": 1.0, "power": 1.0}, a=1e-6, delta=0.5, long_range=False)
    rep = decay_check(pot, RADII)
    assert not rep.passed
    assert rep.fitted_exponent == pytest.approx(-1.0, abs=1e-3)


def test_soft_coulomb_long_part():
    rep = decay_check(PairPotential("soft-coulomb", {"Z": 1.0}, a=1.0, eps=0.9), RADII)
    assert rep.passed
    assert rep.fits[0].part == "long"
    assert rep.fitted_exponent == pytest.approx(-2.0, abs=0.06)


def test_non_decaying_sample_fails():
    pot = PairPotential("inverse-power", {"C": 1.0, "power": -0.5}, a=1.0, long_range=False)
    rep = decay_check(pot, RADII)
    assert not rep.passed and "non-decaying" in rep.fits[0].note


def test_decay_check_needs_eight_radii():
    with pytest.raises(DomainError):
        decay_check(PairPotential("gaussian", {"V0": 1.0}), RADII[:5])
