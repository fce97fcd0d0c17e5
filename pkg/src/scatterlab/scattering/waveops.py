"""Wave operators and their defects on one grid.

Every limit is reported through a tail table ``||W(T_k) - W(T_{k-1})||`` over
the dyadic checkpoints ``T/8, T/4, T/2, T`` so that convergence is measured
rather than assumed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from scatterlab.dynamics import Propagator, dense_hamiltonian, smooth_step, split_step_propagate
from scatterlab.errors import ConfigError, DomainError
from scatterlab.scattering.identification import identification_apply, identification_inverse
from scatterlab.scattering.phase import PhaseFunction
from scatterlab.spectral import GridState, apply_multiplier, dft, free_propagate, idft

CHECKPOINTS = (0.125, 0.25, 0.5, 1.0)


class ConvergenceWarning(UserWarning):
    """A tail table that fails to decrease."""


@dataclass(frozen=True)
class WaveOperatorResult:
    """Output of a wave-operator evaluation.

    Attributes
    ----------
    state : GridState
        ``W(T) g`` at the horizon.
    times : ndarray
        Checkpoints ``T_k``.
    tails : ndarray
        ``||W(T_k) g - W(T_{k-1}) g||`` for ``k >= 1`` (first entry ``nan``).
    horizon : float
    """

    state: GridState
    times: np.ndarray
    tails: np.ndarray
    horizon: float

    @property
    def tail(self) -> float:
        return float(self.tails[-1])

    @property
    def decreasing(self) -> bool:
        t = self.tails[1:]
        return bool(np.all(np.diff(t) <= 0))

    def fitted_power(self) -> float:
        """Slope of ``log tail`` against ``log T`` over the checkpoints."""
        t, v = self.times[1:], self.tails[1:]
        ok = v > 0
        if ok.sum() < 2:
            return -np.inf
        return float(np.polyfit(np.log(t[ok]), np.log(v[ok]), 1)[0])

    def table(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.times, self.tails)]


def _signed(T: float, direction: int) -> float:
    if direction not in (1, -1):
        raise ConfigError("direction must be +1 or -1")
    if not T > 0:
        raise ConfigError("horizon must be positive")
    return direction * float(T)


def _tabulate(T, direction, evaluate) -> WaveOperatorResult:
    times = np.array([c * T for c in CHECKPOINTS])
    states = [evaluate(direction * t) for t in times]
    tails = np.full(len(times), np.nan)
    for k in range(1, len(times)):
        tails[k] = (states[k] - states[k - 1]).norm()
    res = WaveOperatorResult(states[-1], times, tails, float(T))
    if not res.decreasing:
        warnings.warn(f"wave-operator tail not decreasing: {tails[1:]}", ConvergenceWarning, stacklevel=3)
    return res


def cook_wave_operator(prop: Propagator, g: GridState, T: float, direction: int = 1,
                       check: bool = False) -> WaveOperatorResult:
    """``exp(i T H) exp(-i T H0) g`` with the dyadic tail table.

    ``direction = -1`` evaluates the incoming operator (``T -> -T``).
    """
    _signed(T, direction)
    if prop.is_free:
        return WaveOperatorResult(idft(g), np.array([c * T for c in CHECKPOINTS]),
                                  np.r_[np.nan, np.zeros(len(CHECKPOINTS) - 1)], float(T))

    def at(t):
        return split_step_propagate(prop, free_propagate(g, t, prop.mass, check=check), -t, check=check)

    return _tabulate(T, direction, at)


def modified_wave_operator(prop: Propagator, phase: PhaseFunction, g: GridState, T: float,
                           direction: int = 1, check: bool = False) -> WaveOperatorResult:
    """``exp(i T H) J exp(-i T H0) g`` with the dyadic tail table."""
    _signed(T, direction)
    if phase.is_free:
        return cook_wave_operator(prop, g, T, direction, check)

    def at(t):
        u = identification_apply(phase, free_propagate(g, t, prop.mass, check=check))
        return split_step_propagate(prop, u, -t, check=check)

    return _tabulate(T, direction, at)


# ----------------------------------------------------------------------------
# exact small-grid dynamics
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Spectral:
    """Eigendecomposition of the discretised ``H`` (plain inner product)."""

    energies: np.ndarray
    vectors: np.ndarray

    @classmethod
    def of(cls, prop: Propagator) -> "Spectral":
        w, U = np.linalg.eigh(dense_hamiltonian(prop))
        return cls(w, U)

    def apply(self, f, v: np.ndarray) -> np.ndarray:
        U = self.vectors
        return U @ (f(self.energies) * (U.conj().T @ v))


def energy_window(lo: float, hi: float, ramp: float | None = None):
    """Smooth window equal to 1 on ``[lo, hi]`` with ramps of width ``ramp``."""
    if not hi > lo:
        raise ConfigError("energy window needs lo < hi")
    ramp = 0.25 * (hi - lo) if ramp is None else float(ramp)

    def chi(E):
        E = np.asarray(E, float)
        return smooth_step((E - lo + ramp) / ramp) * smooth_step((hi + ramp - E) / ramp)

    chi.support = (lo - ramp, hi + ramp)
    return chi


def _exact_W(spec: Spectral, prop: Propagator, g: GridState, t: float) -> GridState:
    grid = g.grid
    h = grid.hbar
    free = free_propagate(g, t, prop.mass, check=False).values.ravel()
    out = spec.apply(lambda E: np.exp(1j * t * E / h), free)
    return GridState(grid, out.reshape(grid.shape))


def intertwining_defect(prop: Propagator, g: GridState, window, T: float, direction: int = 1,
                        spectral: Spectral | None = None) -> WaveOperatorResult:
    """``||chi_B(H) W(T) g - W(T) chi_B(H0) g||`` at the dyadic checkpoints.

    ``W(T)`` is evaluated exactly from the eigendecomposition of the dense
    discretised ``H``.  The returned ``tails`` hold the defect at each
    checkpoint (not differences) and ``state`` is ``W(T) g``.
    """
    _signed(T, direction)
    spec = Spectral.of(prop) if spectral is None else spectral
    lo, hi = getattr(window, "support", (None, None))
    if lo is not None:
        K = prop.K
        if hi <= max(spec.energies[0], K.min()) or lo >= min(spec.energies[-1], K.max()):
            raise DomainError("energy window lies outside the discretised spectrum")
    g0 = GridState(g.grid, idft(g).values)
    gw = apply_multiplier(g0, window(prop.K))
    times = np.array([c * T for c in CHECKPOINTS])
    vals = np.empty(len(times))
    last = None
    for k, t in enumerate(times):
        s = direction * t
        W = _exact_W(spec, prop, g0, s)
        left = spec.apply(window, W.values.ravel())
        right = _exact_W(spec, prop, gw, s).values.ravel()
        vals[k] = np.sqrt(g.grid.cell) * np.linalg.norm(left - right)
        last = W
    return WaveOperatorResult(last, times, vals, float(T))


# ----------------------------------------------------------------------------
# completeness
# ----------------------------------------------------------------------------

def outgoing_projection(u: GridState, R: float | None = None, kappa: float = 0.25) -> GridState:
    """Smooth phase-space cutoff to ``{s x >= R, s xi > 0}`` summed over ``s``.

    One-dimensional.  The position cutoff ramps from ``R/2`` to ``R`` (default
    ``R`` an eighth of the box); the momentum weights ramp over
    ``|xi| <= kappa`` and sum to one, which avoids the slowly decaying tail a
    sharp sign cut produces.
    """
    grid = u.grid
    if grid.dim != 1:
        raise DomainError("the outgoing projection is implemented on 1-d grids")
    R = grid.L / 8 if R is None else float(R)
    x, xi = grid.x, grid.xi
    p = dft(u).values
    out = np.zeros(grid.points, complex)
    up = smooth_step((xi + kappa) / (2 * kappa))
    for s, w in ((1, up), (-1, 1.0 - up)):
        part = idft(GridState(grid, p * w, "p")).values
        out += smooth_step((s * x - R / 2) / (R / 2)) * part
    return GridState(grid, out)


def completeness_defect(prop: Propagator, f_c: GridState, T: float, phase: PhaseFunction | None = None,
                        R: float | None = None, kappa: float = 0.25, check: bool = False) -> float:
    """``||exp(-i T H) f - J exp(-i T H0) g||`` with ``g = exp(i T H0) J^{-1} P_+ exp(-i T H) f``.

    ``P_+`` is :func:`outgoing_projection`; the defect therefore measures
    the part of ``exp(-i T H) f`` that has not yet become outgoing free motion.
    Without ``phase`` (short-range case) ``J`` is the identity.  For
    ``V = 0`` the wave operator is the identity and the defect is exactly 0.
    """
    if prop.is_free and (phase is None or phase.is_free):
        return 0.0
    u = split_step_propagate(prop, f_c, T, check=check)
    pu = outgoing_projection(u, R, kappa)
    if phase is None or phase.is_free:
        g = free_propagate(pu, -T, prop.mass, check=False)
        back = free_propagate(g, T, prop.mass, check=False)
    else:
        g = free_propagate(identification_inverse(phase, pu).state, -T, prop.mass, check=False)
        back = identification_apply(phase, free_propagate(g, T, prop.mass, check=False), check=False)
    return (u - back).norm()
