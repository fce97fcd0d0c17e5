"""Geometric layer of the many-body problem.

Constants for the cluster partition of unity, the smoothed cutoffs
``phi_sigma``, the partition members ``J_b`` on the shell
``1 <= |x|^2 <= 1 + theta_{N-1}`` (mass metric) and the scattering-space
indicator weights of propagated states.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from scatterlab.coords import (
    ClusterDecomposition,
    JacobiFrame,
    all_decompositions,
    clustered_frame,
    intercluster_pairs,
    jacobi_frame,
    mass_norm2,
    pair_norm2,
    refines,
)
from scatterlab.dynamics import smooth_step
from scatterlab.errors import ConfigError, DomainError
from scatterlab.spectral import GridState, idft


# ----------------------------------------------------------------------------
# constants
# ----------------------------------------------------------------------------

def _floor_1sig(v: float) -> float:
    """Largest one-significant-digit number strictly below ``v``."""
    e = math.floor(math.log10(v))
    m = math.floor(v / 10**e)
    out = m * 10**e
    if out >= v:
        out = (m - 1) * 10**e if m > 1 else 9 * 10 ** (e - 1)
    return float(f"{out:.1e}")


@dataclass(frozen=True)
class PartitionConstants:
    """Constants of the partition of unity.

    ``theta[j-1]`` holds ``theta_j`` for ``j = 1..N-1`` and ``rho[j-2]`` holds
    ``rho_j`` for ``j = 2..N``.  Every strict inequality is checked on
    construction.
    """

    N: int
    gamma: float
    theta: tuple[float, ...]
    rho: tuple[float, ...]
    sigma: float

    def __post_init__(self):
        for name, ok in self.checks().items():
            if not ok:
                raise ConfigError(f"partition constants violate {name}")

    def theta_of(self, j: int) -> float:
        return self.theta[j - 1]

    def rho_of(self, j: int) -> float:
        return self.rho[j - 2]

    @property
    def shell_width(self) -> float:
        return self.theta_of(self.N - 1)

    @property
    def gamma1p(self) -> float:
        return self.gamma * (1 + self.shell_width)

    @property
    def gamma2p(self) -> float:
        return (1 + self.gamma) / (1 + self.shell_width)

    @property
    def r0(self) -> float:
        return min(self.rho_of(j) / self.theta_of(j) for j in range(2, self.N))

    def sigma_bound(self) -> float:
        g = 1 - 1 / self.gamma
        vals = [g * self.rho_of(self.N)]
        for j in range(2, self.N):
            vals += [g * self.rho_of(j), (self.gamma - 1) * self.theta_of(j)]
        return min(vals)

    def checks(self) -> dict[str, bool]:
        """Each defining inequality, by name."""
        N, g = self.N, self.gamma
        th, rh = self.theta_of, self.rho_of
        out = {"N >= 3": N >= 3, "gamma > 1": g > 1}
        if not out["N >= 3"] or len(self.theta) != N - 1 or len(self.rho) != N - 1:
            out["shape"] = False
            return out
        inner = range(2, N)
        out["1 >= theta_1"] = 1 >= th(1)
        out["theta_1 > rho_j > theta_j > rho_N > 0"] = all(th(1) > rh(j) > th(j) > rh(N) > 0 for j in inner)
        out["theta_{j-1} >= theta_j + rho_j"] = all(th(j - 1) >= th(j) + rh(j) for j in inner)
        out["gamma(1+gamma) < r0"] = g * (1 + g) < self.r0
        g1, g2 = self.gamma1p, self.gamma2p
        out["gamma'_1 < 2"] = g1 < 2
        out["2 gamma'_1 gamma'_2 / (2 - gamma'_1) < r0"] = g1 < 2 and 2 * g1 * g2 / (2 - g1) < self.r0
        out["0 < sigma < sigma bound"] = 0 < self.sigma < self.sigma_bound()
        return out

    def to_dict(self) -> dict:
        return {"N": self.N, "gamma": self.gamma, "theta": list(self.theta), "rho": list(self.rho),
                "sigma": self.sigma, "r0": self.r0, "gamma1p": self.gamma1p, "gamma2p": self.gamma2p}


_FRACTIONS = (0.4, 0.3, 0.2, 0.1)
_RATIOS = (8.0, 16.0, 32.0, 64.0, 128.0)


def select_constants(N: int, gamma: float) -> PartitionConstants:
    """Deterministic lattice search for admissible constants.

    With ``theta_1 = 1``, each level takes ``rho_j = f theta_{j-1}`` and
    ``theta_j = rho_j / r``; ``rho_N = f theta_{N-1}``.  Fractions ``f`` are
    tried from 0.4 downwards and ratios ``r`` from 8 upwards; the first tuple
    passing every inequality is returned, with ``sigma`` the largest
    one-digit value below its bound.

    Examples
    --------
    >>> c = select_constants(3, 1.05)
    >>> c.theta, c.rho, c.sigma
    ((1.0, 0.05), (0.4, 0.02), 0.0009)
    """
    if N < 3:
        raise ConfigError("need N >= 3")
    if not gamma > 1:
        raise ConfigError("need gamma > 1")
    last = None
    for f in _FRACTIONS:
        for r in _RATIOS:
            theta, rho = [1.0], []
            for _ in range(2, N):
                rho.append(f * theta[-1])
                theta.append(rho[-1] / r)
            rho.append(f * theta[-1])
            theta = tuple(float(f"{v:.12g}") for v in theta)
            rho = tuple(float(f"{v:.12g}") for v in rho)
            try:
                probe = PartitionConstants(N, gamma, theta, rho, 1e-300)
            except ConfigError as exc:
                last = exc
                continue
            return PartitionConstants(N, gamma, theta, rho, _floor_1sig(probe.sigma_bound()))
    raise ConfigError(f"no admissible constants for N={N}, gamma={gamma}: {last}")


# ----------------------------------------------------------------------------
# smoothed cutoffs
# ----------------------------------------------------------------------------

def mollifier(lam) -> np.ndarray:
    """``rho(lambda)``: 1 for ``lambda <= -1``, 0 for ``lambda >= 0``, nonincreasing."""
    return 1.0 - smooth_step(np.asarray(lam, float) + 1.0)


@dataclass(frozen=True)
class SmoothCutoff:
    """``phi_sigma(lambda < tau)`` (``direction="<"``) or ``phi_sigma(lambda > tau)``."""

    sigma: float
    tau: float
    direction: str = "<"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("cutoff width must be positive")
        if self.direction not in ("<", ">"):
            raise ConfigError("direction must be '<' or '>'")


def cutoff_eval(c: SmoothCutoff, lam) -> np.ndarray:
    """Value of the cutoff at ``lam``.

    ``phi(lambda < tau) = rho((lambda - tau - sigma)/sigma)`` and
    ``phi(lambda > tau) = 1 - phi(lambda < tau - sigma)``.
    """
    lam = np.asarray(lam, float)
    if c.direction == "<":
        return mollifier((lam - (c.tau + c.sigma)) / c.sigma)
    return 1.0 - mollifier((lam - c.tau) / c.sigma)


def _above(lam, tau, sigma):
    return 1.0 - mollifier((lam - tau) / sigma)


# ----------------------------------------------------------------------------
# partition of unity
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Partition:
    """The functions ``phi_b`` and ``J_b`` for one set of constants and masses."""

    constants: PartitionConstants
    frame: JacobiFrame

    def __post_init__(self):
        if self.frame.N != self.constants.N:
            raise DomainError("frame and constants have different N")

    @cached_property
    def levels(self) -> dict[int, list[ClusterDecomposition]]:
        N = self.constants.N
        return {k: all_decompositions(N, k) for k in range(2, N + 1)}

    @cached_property
    def _frames(self):
        return {b: clustered_frame(self.frame, b) for bs in self.levels.values() for b in bs}

    def decompositions(self) -> list[ClusterDecomposition]:
        return [b for k in sorted(self.levels) for b in self.levels[k]]

    def on_shell(self, x) -> np.ndarray:
        r2 = mass_norm2(self.frame, x)
        w = self.constants.shell_width
        eps = 1e-12
        return (r2 >= 1 - eps) & (r2 <= 1 + w + eps)

    def phi(self, b: ClusterDecomposition, x) -> np.ndarray:
        """``phi_b = prod_k phi(|z_bk|^2 > rho_|b|) phi(|x_b|^2 > 1 - theta_|b|)``."""
        c = self.constants
        cf = self._frames[b]
        k = b.size
        z2 = cf.z_norms2(x)
        val = np.prod(_above(z2, c.rho_of(k), c.sigma), axis=-1)
        if k < c.N:  # for |b| = N the second factor is 1 on the shell
            val = val * _above(cf.inter_norm2(x), 1 - c.theta_of(k), c.sigma)
        return val

    def members(self, x, check: bool = True) -> dict[ClusterDecomposition, np.ndarray]:
        """All ``J_b(x)`` from the telescoping product."""
        x = np.asarray(x, float)
        if check and not np.all(self.on_shell(x)):
            raise DomainError("configuration off the shell 1 <= |x|^2 <= 1 + theta_{N-1}")
        out = {}
        rest = None
        for k in sorted(self.levels):
            phis = {b: self.phi(b, x) for b in self.levels[k]}
            for b, p in phis.items():
                out[b] = p if rest is None else p * rest
            level = 1.0 - sum(phis.values())
            rest = level if rest is None else rest * level
        return out


def partition_member(constants: PartitionConstants, b: ClusterDecomposition, x,
                     frame: JacobiFrame | None = None) -> np.ndarray:
    """``J_b(x)`` for configurations ``x`` of shape ``(..., N-1, d)`` on the shell.

    ``frame`` defaults to unit masses in one dimension.
    """
    frame = jacobi_frame([1.0] * constants.N, 1) if frame is None else frame
    if b.N != constants.N or not 2 <= b.size <= constants.N:
        raise DomainError("need 2 <= |b| <= N")
    return Partition(constants, frame).members(x)[b]


def shell_samples(partition: Partition, count: int = 10_000, seed: int = 0,
                  clustered: float = 0.5) -> np.ndarray:
    """Seeded points of the shell in the mass metric.

    A fraction ``clustered`` is drawn near cluster configurations (random
    ``b`` with the internal part shrunk by a random factor) so that every
    regime of the partition is visited; the rest is uniform in direction.
    All points are rescaled to a radius uniform in ``|x|^2``.
    """
    fr = partition.frame
    rng = np.random.default_rng(seed)
    n, d = fr.N - 1, fr.d
    y = rng.normal(size=(count, n, d)) / np.sqrt(fr.reduced_masses)[:, None]
    decs = [b for b in partition.decompositions() if b.size < fr.N]
    m = int(round(clustered * count))
    for i in range(m):
        b = decs[rng.integers(len(decs))]
        cf = partition._frames[b]
        xb, xB = cf.split(y[i])
        y[i] = cf.join(xb, xB * rng.uniform(0.0, 0.6) ** 2)
    r2 = mass_norm2(fr, y)
    target = 1.0 + partition.constants.shell_width * rng.random(count)
    return y * np.sqrt(target / r2)[:, None, None]


@dataclass
class SupportReport:
    """Outcome of :func:`support_check`."""

    samples: int
    sum_error: float
    range_ok: bool
    violations: list = field(default_factory=list)
    overlaps: list = field(default_factory=list)
    grad_sup: float = 0.0
    grad_bound: float = 0.0

    @property
    def passed(self) -> bool:
        return (not self.violations and not self.overlaps and self.range_ok
                and self.grad_sup <= self.grad_bound)

    def to_csv(self, path) -> None:
        """Violations as ``b, pair, |x_a|^2, rho|x|^2/2, x...`` (header only on pass)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["b", "pair", "pair_norm2", "threshold", "x"])
            for row in self.violations:
                w.writerow(row)


def _mollifier_slope() -> float:
    u = np.linspace(0, 1, 20001)
    return float(np.max(np.abs(np.gradient(smooth_step(u), u))))


def support_check(partition: Partition, samples, grad_step: float = 1e-7) -> SupportReport:
    """Sampled check of the partition properties on shell points.

    Reports the worst ``|sum J_b - 1|``, the range ``0 <= J_b <= 1``, every
    sample where ``J_b > 0`` but ``|x_a|^2 <= rho_|b| |x|^2 / 2`` for some
    intercluster pair ``a``, pairs ``b`` not finer than ``c`` with
    ``|b| >= |c|`` whose cutoffs overlap, and the sampled sup of
    ``|grad J_b|`` (orthonormal mass coordinates, central differences)
    against the bound from the chain rule.

    The pair-norm margin rests on ``|x_a|^2 ~ |z_bk|^2``, which in the mass
    metric holds only up to the ratio of pair to cluster reduced masses;
    strongly unequal masses (e.g. 1:2:3:4 for four bodies) can violate it.
    """
    x = np.asarray(samples, float)
    c = partition.constants
    fr = partition.frame
    J = partition.members(x)
    tot = sum(J.values())
    rep = SupportReport(len(x), float(np.max(np.abs(tot - 1.0))),
                        all(bool(np.all((v >= 0) & (v <= 1 + 1e-15))) for v in J.values()))
    r2 = mass_norm2(fr, x)
    for b, v in J.items():
        on = v > 0
        if not np.any(on):
            continue
        thr = c.rho_of(b.size) * r2 / 2
        for a in intercluster_pairs(b):
            bad = np.flatnonzero(on & (pair_norm2(fr, x, a) <= thr))
            for i in bad:
                rep.violations.append([str(b), f"{a[0]}{a[1]}", float(pair_norm2(fr, x[i], a)),
                                       float(thr[i]), " ".join(f"{t:.6g}" for t in x[i].ravel())])
    phis = {b: partition.phi(b, x) for b in partition.decompositions()}
    for b in phis:
        for cc in phis:
            if b == cc or b.size < cc.size or refines(b, cc):
                continue
            both = np.flatnonzero((phis[b] > 0) & (phis[cc] > 0))
            if both.size:
                rep.overlaps.append((str(b), str(cc), int(both.size)))
    # gradient in coordinates orthonormal for the mass metric
    n, d = fr.N - 1, fr.d
    scale = 1.0 / np.sqrt(fr.reduced_masses)[:, None]
    inner = x
    g2 = {b: np.zeros(len(inner)) for b in J}
    for i in range(n):
        for k in range(d):
            e = np.zeros((n, d))
            e[i, k] = grad_step * scale[i, 0]
            jp = partition.members(inner + e, check=False)
            jm = partition.members(inner - e, check=False)
            for b in g2:
                g2[b] += ((jp[b] - jm[b]) / (2 * grad_step)) ** 2
    rep.grad_sup = float(max(np.sqrt(v).max() for v in g2.values()))
    # each factor is a cutoff of a squared norm: |d phi| <= slope/sigma * 2|x|
    nfac = max(len(partition.decompositions()), 1)
    rep.grad_bound = nfac * _mollifier_slope() / c.sigma * 2 * math.sqrt(1 + c.shell_width) * (1 + nfac)
    return rep


# ----------------------------------------------------------------------------
# scattering-space indicator weights
# ----------------------------------------------------------------------------

def grid_configurations(frame: JacobiFrame, grid) -> np.ndarray:
    """Grid nodes as Jacobi configurations of shape ``grid.shape + (N-1, d)``."""
    n, d = frame.N - 1, frame.d
    if grid.dim != n * d:
        raise DomainError(f"grid dimension {grid.dim} does not match (N-1) d = {n * d}")
    pts = np.stack(np.broadcast_arrays(*grid.mesh()), axis=-1)
    return pts.reshape(grid.shape + (n, d))


def cluster_indicator_weight(psi: GridState, frame: JacobiFrame, b: ClusterDecomposition,
                             sigma: float, delta: float, r: float, t: float) -> float:
    """``||prod_a F(|x_a| >= sigma t) F(|x^b| <= delta t^r) psi||^2 / ||psi||^2``.

    Sharp indicators on the grid; lengths in the mass metric; the product
    runs over intercluster pairs ``a`` of ``b``.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    x = grid_configurations(frame, psi.grid)
    mask = np.ones(psi.grid.shape, dtype=bool)
    for a in intercluster_pairs(b):
        mask &= np.sqrt(pair_norm2(frame, x, a)) >= sigma * t
    if b.size < frame.N:
        mask &= np.sqrt(clustered_frame(frame, b).internal_norm2(x)) <= delta * t**r
    w = np.abs(idft(psi).values) ** 2
    tot = float(np.sum(w))
    return float(np.sum(w[mask]) / tot) if tot > 0 else 0.0
