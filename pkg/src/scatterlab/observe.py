"""Observation layer.

Position/momentum and time/energy uncertainty products on grids, Born
cross sections with the relativistic factor, relativistic kinetic and
effective Hamiltonians, quantum-clock period laws and a finite-dimensional
witness of motion inside a subsystem.

Cross sections use Gaussian units with the elementary charge ``e`` as a
parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import constants as sc

from scatterlab.coords import JacobiFrame, all_pairs, jacobi_frame, pair_vector
from scatterlab.dynamics import Propagator, smooth_step
from scatterlab.errors import DomainError
from scatterlab.spectral import Grid, GridState, dft, free_propagate, idft

NORM_TOL = 1e-10


# ----------------------------------------------------------------------------
# position / momentum
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentReport:
    """Means, spreads and their product for one state.

    ``dq`` and ``dp`` are the norms ``||(Q - q) psi||`` and ``||(P - p) psi||``
    summed over axes.
    """

    q: np.ndarray
    p: np.ndarray
    dq: float
    dp: float

    @property
    def product(self) -> float:
        return self.dq * self.dp


def _require_normalized(psi: GridState) -> None:
    n = psi.norm()
    if abs(n - 1.0) > NORM_TOL:
        raise DomainError(f"state norm {n:.12g} differs from 1")


def uncertainty_product(psi: GridState) -> MomentReport:
    """``Delta q``, ``Delta p`` and their product for a normalised grid state.

    Position moments are sums over the grid nodes, momentum moments sums over
    the momentum lattice (spectrally exact derivatives).
    """
    _require_normalized(psi)
    g = psi.grid
    u = idft(psi).values
    v = dft(psi).values
    rho = np.abs(u) ** 2 * g.cell
    sig = np.abs(v) ** 2 * g.momentum_cell
    X, P = g.mesh(), g.momentum_mesh()
    q = np.array([np.sum(rho * x) for x in X])
    p = np.array([np.sum(sig * k) for k in P])
    dq2 = sum(np.sum(rho * (x - qa) ** 2) for x, qa in zip(X, q))
    dp2 = sum(np.sum(sig * (k - pa) ** 2) for k, pa in zip(P, p))
    return MomentReport(q, p, float(np.sqrt(dq2)), float(np.sqrt(dp2)))


def random_states(grid: Grid, count: int = 100, seed: int = 0, noise: float = 0.5) -> list[GridState]:
    """Seeded normalised states near and far from minimal uncertainty.

    Each is a squeezed, chirped and boosted gaussian plus a random admixture
    (relative amplitude up to ``noise``) of band-limited noise under the same
    envelope.  Support stays inside the middle half of the box and momenta
    below half the lattice edge.
    """
    rng = np.random.default_rng(seed)
    X = grid.mesh()
    band = 0.5 * grid.xi_max
    K = np.sqrt(sum(k * k for k in grid.momentum_mesh()))
    cut = smooth_step((band - K) / (0.25 * band))
    w_max = grid.L / 10
    out = []
    for _ in range(count):
        c = rng.uniform(-0.2, 0.2, grid.dim) * grid.L
        w = rng.uniform(0.2, 1.0, grid.dim) * w_max
        chirp = rng.uniform(-1.0, 1.0, grid.dim)
        k = rng.uniform(-0.2, 0.2, grid.dim) * band
        arg = sum(-((x - ci) ** 2) * (1 + 1j * a) / (2 * wi * wi) + 1j * ki * x
                  for x, ci, wi, a, ki in zip(X, c, w, chirp, k))
        u = np.exp(arg)
        z = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
        z = idft(GridState(grid, dft(GridState(grid, z)).values * cut, "p")).values * np.abs(u)
        u = u / np.linalg.norm(u) + rng.uniform(0, noise) * z / np.linalg.norm(z)
        p = dft(GridState(grid, u)).values * cut
        out.append(idft(GridState(grid, p, "p")).normalized())
    return out


# ----------------------------------------------------------------------------
# three-dimensional time and energy
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeEnergyReport:
    dT: float
    dE: float
    abs_T: float  # sqrt(sum_j <t_j^2>)

    @property
    def product(self) -> float:
        return self.dT * self.dE


def _admissible(psi: GridState, p_min: float, tol: float) -> None:
    g = psi.grid
    if g.dim != 3:
        raise DomainError("time and energy operators need a 3-d grid")
    v = np.abs(dft(psi).values) ** 2
    K = np.sqrt(sum(k * k for k in g.momentum_mesh()))
    frac = float(v[K < p_min].sum() / v.sum())
    if frac > tol:
        raise DomainError(f"Fourier weight {frac:.2e} near xi = 0 (|xi| < {p_min})")


class _TE:
    """``t_j`` and ``e_j`` as maps on position values."""

    def __init__(self, grid: Grid, t: float):
        self.g, self.t = grid, float(t)
        P = np.broadcast_arrays(*grid.momentum_mesh())
        K = np.sqrt(sum(k * k for k in P))
        self.absp = K
        with np.errstate(invalid="ignore", divide="ignore"):
            self.dirs = [np.where(K > 0, k / np.where(K > 0, K, 1.0), 0.0) for k in P]
        self.X = grid.mesh()

    def fmul(self, u: np.ndarray, m: np.ndarray) -> np.ndarray:
        p = dft(GridState(self.g, u)).values * m
        return idft(GridState(self.g, p, "p")).values

    def t_j(self, u, j):
        return self.t * self.fmul(u, self.dirs[j])

    def e_j(self, u, j):
        x = self.X[j]
        return (self.fmul(x * u, self.absp) + x * self.fmul(u, self.absp)) / (4 * self.t)

    def E2(self, u):
        return sum(self.e_j(self.e_j(u, j), j) for j in range(3))


def time_energy_uncertainty(psi: GridState, t: float, p_min: float | None = None,
                            tol: float = 1e-10) -> TimeEnergyReport:
    """``Delta T``, ``Delta E`` for ``t_j = t p_j/|p|`` and ``e_j = (|p| x_j + x_j |p|)/(4t)``.

    Spreads are vector norms ``sqrt(sum_j ||(t_j - <t_j>) psi||^2)``.  The
    state must carry at most ``tol`` of its Fourier weight in
    ``|xi| < p_min`` (default two momentum cells).
    """
    if t == 0:
        raise DomainError("t must be nonzero")
    _require_normalized(psi)
    g = psi.grid
    _admissible(psi, 2 * g.dxi if p_min is None else p_min, tol)
    op = _TE(g, t)
    u = idft(psi).values
    w = g.cell

    def spread(apply):
        tot, sq = 0.0, 0.0
        for j in range(3):
            a = apply(u, j)
            mean = np.vdot(u, a).real * w
            tot += np.sum(np.abs(a - mean * u) ** 2) * w
            sq += np.sum(np.abs(a) ** 2) * w
        return math.sqrt(tot), math.sqrt(sq)

    dT, absT = spread(op.t_j)
    dE, _ = spread(op.e_j)
    return TimeEnergyReport(dT, dE, absT)


def _lanczos_sqrt(apply, b: np.ndarray, k: int = 40) -> np.ndarray:
    """``sqrt(A) b`` for a positive Hermitian ``A`` from a ``k``-step Krylov basis."""
    beta0 = np.linalg.norm(b)
    Q = [b / beta0]
    alpha, beta = [], []
    for i in range(k):
        w = apply(Q[-1])
        a = np.vdot(Q[-1], w).real
        w = w - a * Q[-1] - (beta[-1] * Q[-2] if beta else 0)
        for q in Q:  # full reorthogonalisation
            w = w - np.vdot(q, w) * q
        alpha.append(a)
        bn = np.linalg.norm(w)
        if bn < 1e-12 * beta0 or i == k - 1:
            break
        beta.append(bn)
        Q.append(w / bn)
    T = np.diag(alpha) + np.diag(beta[: len(alpha) - 1], 1) + np.diag(beta[: len(alpha) - 1], -1)
    lam, S = np.linalg.eigh(T)
    y = S @ (np.sqrt(np.clip(lam, 0, None)) * S[0]) * beta0
    return sum(c * q for c, q in zip(y, Q))


def energy_operator_defect(psi0: GridState, times: Sequence[float], mass: float = 1.0,
                           krylov: int = 24) -> np.ndarray:
    """Relative ``|| |E| psi(t) - (|p|^2/2m) psi(t) ||`` along the free flow.

    ``|E| = (sum_j e_j^2)^{1/2}`` is applied by a Krylov approximation.
    """
    out = []
    for t in times:
        s = free_propagate(psi0, t, mass, check=False)
        op = _TE(s.grid, t)
        u = idft(s).values
        shp = u.shape
        absE = _lanczos_sqrt(lambda v: op.E2(v.reshape(shp)).ravel(), u.ravel(), krylov).reshape(shp)
        kin = op.fmul(u, op.absp**2 / (2 * mass))
        out.append(np.linalg.norm(absE - kin) / np.linalg.norm(kin))
    return np.array(out)


def admissible_states(grid: Grid, count: int = 50, seed: int = 0, shell=(0.6, 1.6),
                      width: float = 1.5) -> list[GridState]:
    """Seeded 3-d states with Fourier support in a shell away from the origin.

    Each is a sum of a few gaussian packets multiplied in momentum space by a
    smooth radial window vanishing identically for ``|xi| < shell[0]``.
    """
    if grid.dim != 3:
        raise DomainError("admissible states live on 3-d grids")
    rng = np.random.default_rng(seed)
    lo, hi = shell
    P = grid.momentum_mesh()
    K = np.sqrt(sum(k * k for k in P))
    ramp = 0.25 * (hi - lo)
    window = smooth_step((K - lo) / ramp) * smooth_step((hi + ramp - K) / ramp)
    X = grid.mesh()
    out = []
    for _ in range(count):
        u = np.zeros(grid.shape, complex)
        for _ in range(rng.integers(1, 4)):
            c = rng.uniform(-0.2, 0.2, 3) * grid.L
            k = rng.normal(size=3)
            k *= rng.uniform(lo + ramp, hi - ramp) / np.linalg.norm(k)
            w = width * rng.uniform(0.7, 1.3)
            env = np.exp(-sum((x - ci) ** 2 for x, ci in zip(X, c)) / (2 * w * w))
            u = u + rng.normal() * env * np.exp(1j * sum(kj * x for kj, x in zip(k, X)))
        p = dft(GridState(grid, u)).values * window
        out.append(idft(GridState(grid, p, "p")).normalized())
    return out


# ----------------------------------------------------------------------------
# cross sections
# ----------------------------------------------------------------------------

def coulomb_fourier(Z: float, e: float = 1.0, kappa: float = 0.0) -> Callable:
    """``V~(q) = 4 pi Z e^2 / (q^2 + kappa^2)`` of the (screened) Coulomb potential."""
    def V(q):
        q = np.asarray(q, float)
        with np.errstate(divide="ignore"):
            return 4 * np.pi * Z * e * e / (q * q + kappa * kappa)
    return V


def born_cross_section(potential_fourier: Callable, E: float, theta, mass: float = 1.0,
                       hbar: float = 1.0):
    """``|f_B|^2`` with ``f_B = -m V~(q) / (2 pi hbar^2)``, ``q = 2 k sin(theta/2)``.

    ``V~(q)`` is the three-dimensional transform ``int exp(-i q.x) V dx``;
    for Coulomb this is the Rutherford formula, independent of ``mass`` and
    ``hbar``.
    """
    if not E > 0:
        raise DomainError("energy must be positive")
    th = np.asarray(theta, float)
    if np.any((th < 0) | (th > np.pi)):
        raise DomainError("scattering angle must lie in [0, pi]")
    k = math.sqrt(2 * mass * E) / hbar
    q = 2 * k * np.sin(th / 2)
    Vq = np.asarray(potential_fourier(q), float)
    if not np.all(np.isfinite(Vq)):
        raise DomainError("Born amplitude diverges at zero momentum transfer (unscreened potential, theta = 0)")
    f = -mass * Vq / (2 * np.pi * hbar * hbar)
    out = f * f
    return float(out) if np.ndim(out) == 0 else out


def rutherford(Z: float, E: float, theta, e: float = 1.0):
    """``Z^2 e^4 / (16 E^2 sin^4(theta/2))``."""
    s = np.sin(np.asarray(theta, float) / 2)
    with np.errstate(divide="ignore"):
        out = Z * Z * e**4 / (16 * E * E * s**4)
    return float(out) if np.ndim(out) == 0 else out


def _beta(v: float, c: float) -> float:
    if not 0 <= v < c:
        raise DomainError("need 0 <= v < c")
    return v / c


def lorentz_factor(v: float, c: float = 1.0) -> float:
    b = _beta(v, c)
    return 1.0 / math.sqrt(1.0 - b * b)


def relativistic_correction(cross_section, v: float, c: float = 1.0):
    """Multiply a cross section by ``1 - (v/c)^2``."""
    b = _beta(v, c)
    return cross_section * (1.0 - b * b)


def observed_energy(m: float, v: float, c: float = 1.0) -> float:
    """``E' = c sqrt(p^2 + m^2 c^2) - m c^2`` with ``p = m v gamma``.

    Evaluated as ``m v^2 gamma^2 / (gamma + 1)`` to avoid cancellation.
    """
    g = lorentz_factor(v, c)
    return m * v * v * g * g / (g + 1.0)


def relativistic_rutherford(Z: float, m: float, v: float, theta, e: float = 1.0, c: float = 1.0):
    """``Z^2 e^4 (1 - (v/c)^2) / (4 m^2 v^4 sin^4(theta/2))``."""
    if not v > 0:
        raise DomainError("need v > 0")
    s = np.sin(np.asarray(theta, float) / 2)
    return relativistic_correction(Z * Z * e**4 / (4 * m * m * v**4 * s**4), v, c)


# ----------------------------------------------------------------------------
# relativistic kinetic and effective Hamiltonians
# ----------------------------------------------------------------------------

def _rel_kin(P2, m, c):
    # c sqrt(P^2 + m^2 c^2) - m c^2 without cancellation
    return c * P2 / (np.sqrt(P2 + (m * c) ** 2) + m * c)


def relativistic_kinetic_operator(grid: Grid, masses: Sequence[float], c: float = 1.0) -> np.ndarray:
    """Multiplier ``sum_j (c sqrt(xi_j^2 + m_j^2 c^2) - m_j c^2)``.

    The grid axes are split into ``len(masses)`` equal blocks, one momentum
    vector ``xi_j`` per block.
    """
    m = np.asarray(masses, float)
    if np.any(m <= 0) or grid.dim % len(m):
        raise DomainError("masses must be positive and divide the grid dimension")
    d = grid.dim // len(m)
    P = np.broadcast_arrays(*grid.momentum_mesh())
    out = np.zeros(grid.shape)
    for j, mj in enumerate(m):
        P2 = sum(P[j * d + a] ** 2 for a in range(d))
        out += _rel_kin(P2, mj, c)
    return out


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonian:
    """Kinetic multiplier and potential of ``H~_L`` on a Jacobi grid."""

    grid: Grid
    frame: JacobiFrame
    kinetic: np.ndarray
    potential: np.ndarray

    def propagator(self, dt: float) -> Propagator:
        return Propagator(self.grid, self.potential, dt=dt, kinetic=self.kinetic)

    def energy(self, psi: GridState) -> float:
        g = self.grid
        v = dft(psi).values
        u = idft(psi).values
        return float(np.sum(self.kinetic * np.abs(v) ** 2) * g.momentum_cell
                     + np.sum(self.potential * np.abs(u) ** 2) * g.cell)


def effective_hamiltonian(grid: Grid, masses: Sequence[float], G: float,
                          I_b: Callable | None = None, c: float = 1.0, soft: float = 0.1) -> EffectiveHamiltonian:
    """``sum_j (c sqrt(D_j^2 + m_j^2 c^2) - m_j c^2) + I_b(x_b, 0) - G sum m_i m_j / r_ij``.

    ``masses`` are the cluster masses; the grid carries the ``k - 1``
    intercluster Jacobi vectors, so ``grid.dim = (k - 1) d``.  ``D_j`` is
    the centre-of-mass momentum of cluster ``j`` in the frame of the total
    centre of mass.  Distances are soft-cored, ``r -> sqrt(r^2 + soft^2)``.
    ``I_b`` maps configurations ``(..., k-1, d)`` to real values.
    """
    m = np.asarray(masses, float)
    k = len(m)
    if k < 2 or grid.dim % (k - 1):
        raise DomainError("grid dimension must be a multiple of (clusters - 1)")
    d = grid.dim // (k - 1)
    fr = jacobi_frame(m, d)
    A = fr.to_jacobi  # x = A X; cluster momenta P_j = sum_i A_ij xi_i
    xi = np.stack(np.broadcast_arrays(*grid.momentum_mesh()), axis=-1).reshape(grid.shape + (k - 1, d))
    Pj = np.einsum("ij,...id->...jd", A, xi)
    kin = sum(_rel_kin(np.sum(Pj[..., j, :] ** 2, axis=-1), m[j], c) for j in range(k))
    x = np.stack(np.broadcast_arrays(*grid.mesh()), axis=-1).reshape(grid.shape + (k - 1, d))
    V = np.zeros(grid.shape)
    if G:
        for i, j in all_pairs(k):
            r = pair_vector(fr, x, (i, j))
            V -= G * m[i - 1] * m[j - 1] / np.sqrt(np.sum(r * r, axis=-1) + soft * soft)
    if I_b is not None:
        V = V + np.asarray(I_b(x), float)
    return EffectiveHamiltonian(grid, fr, kin, V)


# ----------------------------------------------------------------------------
# clocks
# ----------------------------------------------------------------------------

def relativistic_mass(m0: float, v: float, c: float = sc.c) -> float:
    """``m0 / sqrt(1 - (v/c)^2)``."""
    if not m0 > 0:
        raise DomainError("rest mass must be positive")
    return m0 * lorentz_factor(v, c)


def clock_period(m0: float, v: float, c: float = sc.c, h: float = sc.h) -> float:
    """Period ``p(v) = 2 h m / (m0^2 c^2)`` of a local system moving at ``v``.

    At rest this is the least period ``2 h / (m0 c^2)``.
    """
    m = relativistic_mass(m0, v, c)
    return 2 * h * m / (m0 * m0 * c * c)


def planck_mass(h: float = sc.h, c: float = sc.c, G: float = sc.G) -> float:
    """``sqrt(h c / G)`` (with ``h``, not ``hbar``)."""
    return math.sqrt(h * c / G)


def planck_time(h: float = sc.h, c: float = sc.c, G: float = sc.G) -> float:
    """``sqrt(h G / c^5)``."""
    return math.sqrt(h * G / c**5)


# ----------------------------------------------------------------------------
# local-motion witness
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteModel:
    """``H = H_L x 1 + 1 x H_E + I`` on ``C^dimL x C^dimE``."""

    H_L: np.ndarray
    H_E: np.ndarray
    I_int: np.ndarray

    def __post_init__(self):
        HL, HE, I = (np.asarray(a, float) for a in (self.H_L, self.H_E, self.I_int))
        nL, nE = len(HL), len(HE)
        if HL.shape != (nL, nL) or HE.shape != (nE, nE) or I.shape != (nL * nE, nL * nE):
            raise DomainError("matrix shapes do not match dimL, dimE")
        if max(nL, nE) > 16:
            raise DomainError("dimensions are limited to 16")
        for name, M in (("H_L", HL), ("H_E", HE), ("I_int", I)):
            if not np.allclose(M, M.T, atol=1e-14):
                raise DomainError(f"{name} must be symmetric")
        object.__setattr__(self, "H_L", HL)
        object.__setattr__(self, "H_E", HE)
        object.__setattr__(self, "I_int", I)

    @property
    def total(self) -> np.ndarray:
        nL, nE = len(self.H_L), len(self.H_E)
        return np.kron(self.H_L, np.eye(nE)) + np.kron(np.eye(nL), self.H_E) + self.I_int


@dataclass(frozen=True)
class WitnessReport:
    value: float  # ||(1 - P_L) P||
    commutator: float  # ||[P_L, P]||
    degenerate: bool
    ground_energy: float
    local_level: float  # eigenvalue of H_L whose eigenspace defines P_L


def _eig_projector(H: np.ndarray, tol: float):
    w, U = np.linalg.eigh(H)
    levels = []
    i = 0
    while i < len(w):
        j = i + 1
        while j < len(w) and w[j] - w[i] <= tol * max(1.0, abs(w[i])):
            j += 1
        levels.append((float(w[i:j].mean()), U[:, i:j]))
        i = j
    return levels


def local_motion_witness(model: FiniteModel, tol: float = 1e-10) -> WitnessReport:
    """``||(1 - P_L) P||`` and ``||[P_L, P]||`` by exact diagonalisation.

    ``P`` projects onto the ground eigenspace of the total Hamiltonian (the
    whole degenerate subspace when it is degenerate; flagged).  ``P_L`` is
    the eigenprojection of ``H_L x 1`` for the level carrying the largest
    weight of that subspace.
    """
    nE = len(model.H_E)
    g_level, V = _eig_projector(model.total, tol)[0]
    P = V @ V.T
    best = None
    for lam, U in _eig_projector(model.H_L, tol):
        PL = np.kron(U @ U.T, np.eye(nE))
        wgt = float(np.trace(PL @ P))
        if best is None or wgt > best[0] + 1e-12:
            best = (wgt, lam, PL)
    _, lam, PL = best
    one = np.eye(len(P))
    return WitnessReport(float(np.linalg.norm((one - PL) @ P, 2)),
                         float(np.linalg.norm(PL @ P - P @ PL, 2)),
                         V.shape[1] > 1, g_level, lam)
