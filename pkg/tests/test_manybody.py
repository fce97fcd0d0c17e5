import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scatterlab.coords import ClusterDecomposition, clustered_frame, jacobi_frame, mass_norm2
from scatterlab.errors import ConfigError, DomainError
from scatterlab.manybody import (
    Partition,
    PartitionConstants,
    SmoothCutoff,
    cluster_indicator_weight,
    cutoff_eval,
    mollifier,
    partition_member,
    select_constants,
    shell_samples,
    support_check,
)
from scatterlab.spectral import Grid, GridState, free_propagate

D = ClusterDecomposition.parse


# ---------------------------------------------------------------- constants

def test_constants_example_n3():
    c = select_constants(3, 1.05)
    assert c.theta == (1.0, 0.05)
    assert c.rho == (0.4, 0.02)
    assert c.sigma == pytest.approx(9e-4)
    # oracle: the inequalities by hand
    assert c.theta[0] >= c.theta[1] + c.rho[0]
    assert c.r0 == pytest.approx(8.0)
    assert 1.05 * 2.05 == pytest.approx(2.1525)
    g1 = 1.05 * 1.05
    g2 = 2.05 / 1.05
    assert 2 * g1 * g2 / (2 - g1) == pytest.approx(4.80, abs=0.01)
    assert c.sigma < min((1 - 1 / 1.05) * 0.02, (1 - 1 / 1.05) * 0.4, 0.05 * 0.05)


def test_constants_infeasible_gamma():
    with pytest.raises(ConfigError, match="gamma'_1 < 2"):
        select_constants(3, 2.0)


def test_constants_bad_tuple_named():
    with pytest.raises(ConfigError, match="theta_{j-1} >= theta_j \\+ rho_j"):
        PartitionConstants(3, 1.05, (1.0, 0.7), (0.9, 0.02), 1e-4)


@pytest.mark.parametrize("N", [3, 4, 5])
def test_constants_monotone_and_deterministic(N):
    c = select_constants(N, 1.05)
    assert all(a > b for a, b in zip(c.theta, c.theta[1:]))
    assert c == select_constants(N, 1.05)
    assert all(c.checks().values())


# ---------------------------------------------------------------- cutoffs

def test_cutoff_examples():
    c = SmoothCutoff(0.1, 2.0, "<")
    assert cutoff_eval(c, 2.0) == 1.0
    assert cutoff_eval(c, 2.1) == 0.0
    lam = np.linspace(2.0, 2.1, 101)
    v = cutoff_eval(c, lam)
    assert 0 < cutoff_eval(c, 2.05) < 1
    assert np.all(np.diff(v) <= 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-3, 3), st.floats(1e-3, 2))
def test_cutoff_complementary(lam, tau, sigma):
    up = cutoff_eval(SmoothCutoff(sigma, tau, ">"), lam)
    down = cutoff_eval(SmoothCutoff(sigma, tau - sigma, "<"), lam)
    assert abs(up + down - 1.0) <= 1e-15
    assert 0.0 <= up <= 1.0


def test_mollifier_shape():
    assert mollifier(-1.0) == 1.0 and mollifier(0.0) == 0.0
    assert np.all(np.diff(mollifier(np.linspace(-1, 0, 200))) <= 0)


# ---------------------------------------------------------------- partition

@pytest.fixture(scope="module", params=[(3, 1), (3, 3), (4, 1)], ids=["N3d1", "N3d3", "N4d1"])
def part(request):
    N, d = request.param
    return Partition(select_constants(N, 1.05), jacobi_frame([1.0] * N, d))


def test_partition_sum_and_support(part):
    rep = support_check(part, shell_samples(part, 10_000, seed=3))
    assert rep.sum_error <= 1e-10
    assert rep.range_ok
    assert rep.violations == []
    assert rep.overlaps == []
    assert math.isfinite(rep.grad_sup) and rep.grad_sup <= rep.grad_bound
    assert rep.passed


def test_gradient_stable_under_refinement():
    p = Partition(select_constants(3, 1.05), jacobi_frame([1.0] * 3, 1))
    coarse = support_check(p, shell_samples(p, 10_000, seed=0))
    fine = support_check(p, shell_samples(p, 40_000, seed=1))
    assert coarse.grad_sup > 0
    assert abs(fine.grad_sup / coarse.grad_sup - 1) < 0.05
    assert fine.grad_sup <= fine.grad_bound == coarse.grad_bound


def test_member_deep_inside_is_one():
    c = select_constants(3, 1.05)
    fr = jacobi_frame([1.0] * 3, 1)
    b = D("{1,2}|{3}")
    cf = clustered_frame(fr, b)
    x = cf.join(np.ones((1, 1)), np.zeros((1, 1)))  # (inter, internal)
    x = x / math.sqrt(mass_norm2(fr, x))
    J = Partition(c, fr).members(x[None])
    assert J[b][0] == 1.0
    assert sum(v[0] for k, v in J.items() if k != b) == 0.0
    assert partition_member(c, b, x[None])[0] == 1.0


def test_member_outside_is_zero():
    c = select_constants(3, 1.05)
    fr = jacobi_frame([1.0] * 3, 1)
    b = D("{1,2}|{3}")
    cf = clustered_frame(fr, b)
    x = cf.join(np.ones((1, 1)), np.ones((1, 1)))  # internal part half of |x|^2
    x = x / math.sqrt(mass_norm2(fr, x))
    assert cf.internal_norm2(x) > 1.05 * c.theta_of(2)
    assert partition_member(c, b, x[None])[0] == 0.0


def test_off_shell_raises():
    c = select_constants(3, 1.05)
    with pytest.raises(DomainError):
        partition_member(c, D("{1,2}|{3}"), np.full((1, 2, 1), 2.0))


def test_member_needs_valid_size():
    c = select_constants(3, 1.05)
    with pytest.raises(DomainError):
        partition_member(c, D("{1,2,3}"), np.zeros((1, 2, 1)))


def test_violation_csv(tmp_path):
    # unequal masses break the pair-norm margin; the report carries witnesses
    p = Partition(select_constants(4, 1.05), jacobi_frame([1.0, 2.0, 3.0, 4.0], 1))
    rep = support_check(p, shell_samples(p, 4000, seed=1))
    assert rep.violations and not rep.passed
    path = tmp_path / "v.csv"
    rep.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0].startswith("b,pair") and len(rows) == len(rep.violations) + 1


# ---------------------------------------------------------------- indicator weights

def _three_body_state(t, bound_x1=True, k2=3.0, moving=True, width=4.0):
    """Unit-mass three bodies in 1-d on the Jacobi plane ``(x1, x2)``.

    Velocity spreads are ``1/(mu width)``, so width 4 keeps the relative
    packet within ``O(t/2)`` while ``x2`` drifts at ``k2/mu2 = 1.5 k2``.
    """
    n, L = 512, 100.0
    g1 = Grid(1, n, L)
    mu = (0.5, 2.0 / 3.0)
    env = np.exp(-g1.x**2 / (2.0 * width**2))
    if bound_x1:
        f1 = env  # static pair (stand-in for a bound state)
    else:
        f1 = free_propagate(GridState(g1, env), t, mu[0], check=False).values
    k = k2 if moving else 0.0
    f2 = GridState(g1, env * np.exp(1j * k * g1.x))
    f2 = f2.values if not moving else free_propagate(f2, t, mu[1], check=False).values
    g2 = Grid(2, n, L)
    return GridState(g2, np.outer(f1, f2)), jacobi_frame([1.0] * 3, 1)


def test_weight_free_matching():
    psi, fr = _three_body_state(10.0, bound_x1=False)
    w = cluster_indicator_weight(psi, fr, D("{1,2}|{3}"), sigma=1.0, delta=4.0, r=1.0, t=10.0)
    assert w >= 0.95


def test_weight_mismatched_bound_pair():
    psi, fr = _three_body_state(10.0, bound_x1=True)
    w = cluster_indicator_weight(psi, fr, D("{1,3}|{2}"), sigma=1.0, delta=4.0, r=1.0, t=10.0)
    assert w < 1e-6


def test_weight_pure_bound_state():
    for t in (40.0, 80.0):
        psi, fr = _three_body_state(t, bound_x1=True, moving=False)
        for b in ("{1,2}|{3}", "{1,3}|{2}", "{1}|{2}|{3}"):
            assert cluster_indicator_weight(psi, fr, D(b), 0.5, 4.0, 1.0, t) < 1e-6


def test_weight_requires_positive_time():
    psi, fr = _three_body_state(1.0)
    with pytest.raises(DomainError):
        cluster_indicator_weight(psi, fr, D("{1,2}|{3}"), 1.0, 1.0, 1.0, 0.0)
