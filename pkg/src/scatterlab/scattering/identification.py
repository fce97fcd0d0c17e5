"""The identification operator ``J`` on one-dimensional grids.

``J psi(x) = (2 pi hbar)^{-1/2} sum_k exp(i phi(x, xi_k)/hbar) F psi(xi_k) dxi``
is assembled as a dense matrix from a tabulated :class:`PhaseFunction`.  On
the lattice ``J J* = M M^H / n`` with ``M_jk = exp(i phi(x_j, xi_k)/hbar)``,
so the free phase ``x xi`` gives the identity exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from scatterlab.errors import ConfigError, ConvergenceError, DomainError
from scatterlab.scattering.phase import PhaseFunction
from scatterlab.spectral import Grid, GridState, dft, idft


@dataclass(frozen=True, eq=False)
class Identification:
    """Dense ``J`` for one phase function on one grid."""

    phase: PhaseFunction
    grid: Grid
    M: np.ndarray

    @property
    def n(self) -> int:
        return self.grid.points

    def apply_values(self, psi_hat: np.ndarray) -> np.ndarray:
        """Position values of ``J psi`` from the momentum values of ``psi``."""
        g = self.grid
        return (g.dxi / np.sqrt(2 * np.pi * g.hbar)) * (self.M @ psi_hat)

    def adjoint_values(self, u: np.ndarray) -> np.ndarray:
        """Momentum values of ``J* u`` from position values ``u``."""
        g = self.grid
        return (g.dx / np.sqrt(2 * np.pi * g.hbar)) * (self.M.conj().T @ u)

    def gram(self) -> np.ndarray:
        """``J J*`` as a matrix on position values."""
        return (self.M @ self.M.conj().T) / self.n

    def defect_norm(self) -> float:
        """Operator norm of ``I - J J*``."""
        return float(np.linalg.norm(np.eye(self.n) - self.gram(), 2))

    def bound(self) -> float:
        """Operator norm of ``J``."""
        return float(np.linalg.norm(self.M, 2) / np.sqrt(self.n))


_CACHE: dict = {}


def identification_matrix(phase: PhaseFunction, grid: Grid) -> Identification:
    """Assemble (and memoise) ``J`` for ``phase`` on ``grid``."""
    if grid.dim != 1:
        raise ConfigError("the identification operator is implemented on 1-d grids")
    key = (id(phase), grid)
    hit = _CACHE.get(key)
    if hit is not None and hit.phase is phase:
        return hit
    x = grid.x[:, None, None]
    k = grid.xi[None, :, None]
    ph = phase(x, k) if not phase.is_free else (grid.x[:, None] * grid.xi[None, :])
    J = Identification(phase, grid, np.exp(1j * ph / grid.hbar))
    if len(_CACHE) > 8:
        _CACHE.clear()
    _CACHE[key] = J
    return J


def _low_momentum_fraction(psi: GridState, d: float) -> float:
    p = dft(psi)
    w = np.abs(p.values) ** 2
    tot = np.sum(w)
    return float(np.sum(w[np.abs(psi.grid.xi) < d]) / tot) if tot > 0 else 0.0


def identification_apply(phase: PhaseFunction, psi: GridState, check: bool = True,
                         support_tol: float = 1e-8) -> GridState:
    """``J psi``.

    With ``check`` the momentum support of ``psi`` must lie in ``|xi| >= d``
    up to a relative weight ``support_tol``; otherwise :class:`DomainError`.
    """
    if check and not phase.is_free:
        frac = _low_momentum_fraction(psi, phase.d)
        if frac > support_tol:
            raise DomainError(f"momentum weight {frac:.2e} below |xi| = d = {phase.d}")
    J = identification_matrix(phase, psi.grid)
    return GridState(psi.grid, J.apply_values(dft(psi).values))


def identification_adjoint(phase: PhaseFunction, u: GridState) -> GridState:
    """``J* u``."""
    J = identification_matrix(phase, u.grid)
    return idft(GridState(u.grid, J.adjoint_values(idft(u).values), "p"))


@dataclass(frozen=True)
class InverseResult:
    state: GridState
    residual: float
    iterations: int


def identification_inverse(phase: PhaseFunction, psi: GridState, tol: float = 1e-10,
                           maxiter: int = 500) -> InverseResult:
    """``J^{-1} psi = J* (J J*)^{-1} psi`` by conjugate gradients.

    The relative residual ``||J (J^{-1} psi) - psi|| / ||psi||`` is certified
    below ``tol``; a :class:`ConvergenceError` suggests a larger ``R0``.
    """
    g = psi.grid
    if phase.is_free:
        return InverseResult(idft(psi), 0.0, 0)
    J = identification_matrix(phase, g)
    u = idft(psi).values
    n = J.n
    op = LinearOperator((n, n), matvec=lambda v: J.M @ (J.M.conj().T @ v) / n, dtype=complex)
    count = [0]

    def tick(_):
        count[0] += 1

    v, info = cg(op, u, rtol=tol * 1e-2, atol=0.0, maxiter=maxiter, callback=tick)
    out = idft(GridState(g, J.adjoint_values(v), "p"))
    back = J.apply_values(dft(out).values)
    scale = np.linalg.norm(u)
    res = float(np.linalg.norm(back - u) / scale) if scale > 0 else 0.0
    if info != 0 or res > tol:
        raise ConvergenceError(f"J inverse residual {res:.2e} above {tol:.1e}; increase R0")
    return InverseResult(out, res, count[0])


def left_inverse(phase: PhaseFunction, psi: GridState) -> GridState:
    """``(J* J)^{-1} J* psi`` by a dense solve (cross-check of the inverse)."""
    J = identification_matrix(phase, psi.grid)
    g = psi.grid
    A = (J.M.conj().T @ J.M) / J.n
    rhs = (J.M.conj().T @ idft(psi).values) / J.n
    c = np.linalg.solve(A, rhs)
    # c holds momentum values scaled so that J applied to them reproduces psi
    return idft(GridState(g, c * np.sqrt(2 * np.pi * g.hbar) / g.dxi, "p"))


def probe_set(grid: Grid, d: float, count: int = 8, seed: int = 0, band: float = 3.0) -> list[GridState]:
    """Normalised random states with momenta in ``d <= |xi| <= band``, spread over the box."""
    rng = np.random.default_rng(seed)
    out = []
    xi = grid.xi
    window = ((np.abs(xi) >= d) & (np.abs(xi) <= band)).astype(float)
    for _ in range(count):
        c = rng.uniform(-0.6, 0.6) * grid.L
        w = rng.uniform(2.0, 6.0)
        env = np.exp(-((grid.x - c) ** 2) / (2 * w * w))
        noise = rng.normal(size=grid.points) + 1j * rng.normal(size=grid.points)
        p = dft(GridState(grid, env * noise)).values * window
        out.append(idft(GridState(grid, p, "p")).normalized())
    return out


def probe_defect(phase: PhaseFunction, probes) -> float:
    """``max ||(I - J J*) psi|| / ||psi||`` over ``probes``."""
    worst = 0.0
    for psi in probes:
        J = identification_matrix(phase, psi.grid)
        u = idft(psi).values
        r = u - J.gram() @ u if J.n <= 2048 else u - J.M @ (J.M.conj().T @ u) / J.n
        worst = max(worst, float(np.linalg.norm(r) / np.linalg.norm(u)))
    return worst


def choose_R0(phase: PhaseFunction, grid: Grid, probes=None, start: float = 2.0,
              threshold: float = 0.5) -> PhaseFunction:
    """Smallest power-of-two ``R0`` with ``||I - J J*|| < threshold`` on probes."""
    probes = probe_set(grid, phase.d) if probes is None else probes
    R0 = start
    while R0 <= 2 * grid.L:
        cand = phase.with_R0(R0)
        if probe_defect(cand, probes) < threshold:
            return cand
        R0 *= 2
    raise ConvergenceError("no R0 up to the box size makes ||I - J J*|| small enough")
