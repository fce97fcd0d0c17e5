"""Interacting propagation and the decay measurements built on it.

The propagator is Strang splitting ``e^{-i dt V/2} e^{-i dt K} e^{-i dt V/2}``
on a periodic grid.  With ``V = 0`` it is exact.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from scatterlab.errors import ConfigError, DomainError
from scatterlab.spectral import (
    Grid,
    GridState,
    check_boundary,
    dft,
    idft,
)

DEFAULT_WINDOW = (5.0, 50.0)


# ----------------------------------------------------------------------------
# propagator
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Propagator:
    """Second-order split-step propagator for ``H = K(D) + V(x)``.

    Parameters
    ----------
    grid : Grid
    potential : array, optional
        Real potential sampled on the grid; zero when omitted.
    mass : float or sequence
        Per-axis masses used for ``K = sum xi_a^2 / (2 m_a)``.
    dt : float
        Time step.
    kinetic : array, optional
        Replaces the quadratic kinetic multiplier (e.g. a relativistic one).
    """

    grid: Grid
    potential: np.ndarray | None = None
    mass: float | Sequence[float] = 1.0
    dt: float = 0.01
    kinetic: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("time step must be positive")
        if self.potential is not None:
            V = np.asarray(self.potential)
            if V.shape != self.grid.shape:
                raise DomainError("potential shape does not match the grid")
            if np.iscomplexobj(V) or not np.all(np.isfinite(V)):
                raise DomainError("potential must be real and finite")
        if self.kinetic is not None and np.asarray(self.kinetic).shape != self.grid.shape:
            raise DomainError("kinetic multiplier shape does not match the grid")

    @property
    def K(self) -> np.ndarray:
        if "K" not in self._cache:
            self._cache["K"] = self.grid.kinetic(self.mass) if self.kinetic is None else np.asarray(self.kinetic, float)
        return self._cache["K"]

    @property
    def V(self) -> np.ndarray:
        return np.zeros(self.grid.shape) if self.potential is None else np.asarray(self.potential, float)

    @property
    def masses(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.mass, dtype=float), (self.grid.dim,)).copy()

    @property
    def is_free(self) -> bool:
        return self.potential is None or not np.any(self.potential)

    def _factors(self, h: float):
        key = ("f", h)
        if key not in self._cache:
            hb = self.grid.hbar
            half = None if self.is_free else np.exp(-0.5j * h * self.V / hb)
            self._cache[key] = (half, np.exp(-1j * h * self.K / hb))
        return self._cache[key]

    def steps_for(self, t: float) -> int:
        n = round(t / self.dt)
        if abs(n * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(f"t={t} is not an integer multiple of dt={self.dt}")
        return int(n)

    def hamiltonian(self, psi: GridState) -> GridState:
        """``H psi`` (exact multiplier and potential)."""
        p = dft(psi)
        kin = idft(GridState(self.grid, p.values * self.K, "p")).values
        return GridState(self.grid, kin + self.V * idft(psi).values)

    def energy(self, psi: GridState) -> float:
        return float(np.real(self.hamiltonian(psi).inner(psi)))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """``H`` on flattened value arrays (Hermitian in the plain inner product)."""
        return self.hamiltonian(GridState(self.grid, v.reshape(self.grid.shape))).values.ravel()


def _evolve(prop: Propagator, values: np.ndarray, n: int) -> np.ndarray:
    """``n`` Strang steps of signed size ``dt`` on raw position values."""
    if n == 0:
        return values
    import scipy.fft as sfft

    g = prop.grid
    h = prop.dt if n > 0 else -prop.dt
    half, kin = prop._factors(h)
    ax = tuple(range(g.dim))
    # work in unshifted FFT order for speed; shifts are applied to the factors
    kin_u = sfft.ifftshift(kin, axes=ax)
    v = sfft.ifftshift(values, axes=ax)
    half_u = None if half is None else sfft.ifftshift(half, axes=ax)
    for _ in range(abs(n)):
        if half_u is not None:
            v = v * half_u
        v = sfft.ifftn(sfft.fftn(v, axes=ax) * kin_u, axes=ax)
        if half_u is not None:
            v = v * half_u
    return sfft.fftshift(v, axes=ax)


def split_step_propagate(prop: Propagator, psi0: GridState, t: float, check: bool = True) -> GridState:
    """Approximate ``exp(-i t H / hbar) psi0`` by Strang splitting.

    ``t`` must be an integer multiple of ``prop.dt`` (negative allowed).
    """
    n = prop.steps_for(t)
    out = GridState(prop.grid, _evolve(prop, idft(psi0).values, n))
    if check:
        check_boundary(out)
    return out


def trajectory(prop: Propagator, psi0: GridState, times, check: bool = True):
    """Yield ``(t, psi(t))`` for increasing ``times`` (sequential propagation)."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise DomainError("times must be strictly increasing")
    cur = idft(psi0).values
    now = 0
    for t in times:
        n = prop.steps_for(t)
        cur = _evolve(prop, cur, n - now)
        now = n
        st = GridState(prop.grid, cur)
        if check:
            check_boundary(st)
        yield float(t), st


# ----------------------------------------------------------------------------
# eigenstates
# ----------------------------------------------------------------------------

def lowest_states(prop: Propagator, k: int, tol: float = 1e-12) -> tuple[np.ndarray, list[GridState]]:
    """Lowest ``k`` eigenpairs of the discretised ``H`` by Lanczos iteration."""
    n = prop.grid.points**prop.grid.dim
    op = LinearOperator((n, n), matvec=prop.matvec, dtype=complex)
    v0 = np.ones(n, dtype=complex)
    vals, vecs = eigsh(op, k=k, which="SA", tol=tol, v0=v0)
    order = np.argsort(vals)
    states = [GridState(prop.grid, vecs[:, i].reshape(prop.grid.shape)).normalized() for i in order]
    return vals[order], states


def dense_hamiltonian(prop: Propagator) -> np.ndarray:
    """Dense Hermitian matrix of ``H`` in the plain inner product (small grids)."""
    n = prop.grid.points**prop.grid.dim
    if n > 4096:
        raise DomainError("dense Hamiltonian limited to 4096 grid points")
    H = np.empty((n, n), dtype=complex)
    eye = np.eye(n, dtype=complex)
    for j in range(n):
        H[:, j] = prop.matvec(eye[j])
    return 0.5 * (H + H.conj().T)


def project_out(psi: GridState, states: Sequence[GridState]) -> GridState:
    out = idft(psi).values.copy()
    for s in states:
        c = GridState(psi.grid, out).inner(s)
        out = out - c * idft(s).values
    return GridState(psi.grid, out)


# ----------------------------------------------------------------------------
# decay tables
# ----------------------------------------------------------------------------

def fit_slope(times, values, window=DEFAULT_WINDOW, floor: float = 0.0) -> float:
    """Least-squares slope of ``log value`` against ``log t`` inside ``window``.

    Entries at or below ``floor`` are dropped (round-off plateau).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = (t >= window[0]) & (t <= window[1]) & (v > floor)
    if sel.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(t[sel]), np.log(v[sel]), 1)[0])


@dataclass(frozen=True)
class DecayTable:
    times: np.ndarray
    values: np.ndarray
    window: tuple[float, float] = DEFAULT_WINDOW
    floor: float = 0.0
    label: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise DomainError("times and values must be matching 1-d arrays")
        if np.any(np.diff(t) <= 0):
            raise DomainError("times must be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DomainError("values must be finite and nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def slope(self) -> float:
        return fit_slope(self.times, self.values, self.window, self.floor)

    def in_window(self) -> np.ndarray:
        return (self.times >= self.window[0]) & (self.times <= self.window[1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["t", "value"])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])
            w.writerow([f"# fittedSlope={self.slope!r}", f"window={self.window[0]!r}:{self.window[1]!r}"])


# ----------------------------------------------------------------------------
# local time
# ----------------------------------------------------------------------------

def _velocity_defect(psi: GridState, t: float, masses: np.ndarray, centre=None) -> float:
    """``|| sqrt(mu) (x/t - D/mu) psi ||`` summed over axes."""
    g = psi.grid
    x = idft(psi).values
    p = dft(psi).values
    total = 0.0
    for a, (X, P) in enumerate(zip(g.mesh(), g.momentum_mesh())):
        c = 0.0 if centre is None else centre[a]
        vel = idft(GridState(g, P * p / masses[a], "p")).values
        d = (X - c) / t * x - vel
        total += masses[a] * np.sum(np.abs(d) ** 2) * g.cell
    return math.sqrt(total)


def local_time_defect(prop: Propagator, psi0: GridState, times, window=DEFAULT_WINDOW,
                      check: bool = True) -> DecayTable:
    """``|| (x/t - v) psi(t) ||`` in the mass metric at each time.

    For free evolution this equals ``|| x psi0 ||/t`` exactly, since
    ``x(t) = x + t v`` in the Heisenberg picture.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise DomainError("local time defect needs t > 0")
    m = prop.masses
    vals = [_velocity_defect(st, t, m) for t, st in trajectory(prop, psi0, times, check)]
    return DecayTable(times, np.array(vals), tuple(window), label="local-time")


def ehrenfest_track(prop: Propagator, psi0: GridState, times, check: bool = True):
    """``<x>(t)`` and ``<D>(t)`` per time; arrays of shape ``(len(times), m)``."""
    times = np.asarray(times, dtype=float)
    X, P = [], []
    if len(times) and times[0] == 0:
        seq = [(0.0, idft(psi0))] + list(trajectory(prop, psi0, times[1:], check))
    else:
        seq = trajectory(prop, psi0, times, check)
    for _, st in seq:
        X.append(position_mean(st))
        P.append(momentum_mean(st))
    return times, np.array(X), np.array(P)


def position_mean(psi: GridState) -> np.ndarray:
    g = psi.grid
    dens = np.abs(idft(psi).values) ** 2
    tot = dens.sum()
    return np.array([float(np.sum(dens * X) / tot) for X in g.mesh()])


def momentum_mean(psi: GridState) -> np.ndarray:
    g = psi.grid
    dens = np.abs(dft(psi).values) ** 2
    tot = dens.sum()
    return np.array([float(np.sum(dens * P) / tot) for P in g.momentum_mesh()])


# ----------------------------------------------------------------------------
# propagation estimates
# ----------------------------------------------------------------------------

def smooth_step(u) -> np.ndarray:
    """C-infinity step: 0 for ``u <= 0``, 1 for ``u >= 1``."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        f0 = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        f1 = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1 - u, 1.0)), 0.0)
    return f0 / (f0 + f1)


@dataclass(frozen=True)
class SymbolSpec:
    """Parameters of a propagation-estimate family.

    ``family`` is ``"propa1"`` (weight/weight), ``"propa2"`` (weight/outgoing)
    or ``"propa3"`` (incoming/outgoing).  ``sigma`` is the distance from
    ``x = 0`` and ``xi = 0`` where the symbols vanish; the symbols reach
    their full value at ``2 sigma``.  The momentum cutoffs are also switched
    off smoothly between ``cap`` and ``2 cap`` so that nothing outruns the
    periodic box.
    """

    family: str = "propa1"
    s: float = 1.0
    delta: float = 0.0
    theta: float = 0.0
    rho: float = 0.5
    sigma: float = 0.5
    cap: float = 4.0

    def __post_init__(self):
        if not self.cap > 2 * self.sigma:
            raise ConfigError("momentum cap must exceed 2 sigma")
        if self.family not in ("propa1", "propa2", "propa3"):
            raise ConfigError(f"unknown estimate family {self.family!r}")
        if self.s < 0 or self.delta < 0:
            raise ConfigError("s and delta must be nonnegative")
        if self.family == "propa2" and self.delta > self.s:
            raise ConfigError("propa2 needs delta <= s")
        if not -1 < self.theta < 1 or not self.rho > 0:
            raise ConfigError("need theta in (-1, 1) and rho > 0")
        if not (self.theta + self.rho < 1 and self.theta - self.rho > -1):
            raise ConfigError("need theta + rho < 1 and theta - rho > -1")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")

    @property
    def exponent(self) -> float:
        """Decay exponent the estimate predicts (``-s``; ``-s + delta`` for propa2)."""
        return -(self.s - self.delta) if self.family == "propa2" else -self.s


def probe_states(grid: Grid, count: int = 16, seed: int = 0, width: float = 1.5, band: float = 3.0,
                 centre=0.0) -> list[GridState]:
    """Seeded random states localised near ``centre`` and band-limited to ``|xi| <~ band``."""
    rng = np.random.default_rng(seed)
    X = grid.mesh()
    c = np.broadcast_to(np.asarray(centre, float), (grid.dim,))
    env = np.exp(-sum((x - a) ** 2 for x, a in zip(X, c)) / (2 * width**2))
    R = np.sqrt(sum(P**2 for P in grid.momentum_mesh()))
    low = np.exp(-((R / band) ** 8))
    out = []
    for _ in range(count):
        noise = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
        st = GridState(grid, noise * env)
        st = idft(GridState(grid, dft(st).values * low, "p"))
        # re-localise softly, then band-limit once more
        st = idft(GridState(grid, dft(GridState(grid, st.values * env)).values * low, "p"))
        out.append(st.normalized())
    return out


class _Symbols:
    def __init__(self, grid: Grid, spec: SymbolSpec):
        self.grid = grid
        self.spec = spec
        sg = spec.sigma
        X = grid.mesh()
        P = grid.momentum_mesh()
        r = np.sqrt(sum(x * x for x in X))
        k = np.sqrt(sum(p * p for p in P))
        self.weight = lambda s: (1 + r * r) ** (-s / 2)
        self.q = smooth_step((k - sg) / sg)
        if grid.dim == 1:
            x, xi = X[0], P[0]
            self.a_pos = smooth_step((x - sg) / sg)
            self.a_neg = smooth_step((-x - sg) / sg)
            hi = 1 - smooth_step((np.abs(xi) - spec.cap) / spec.cap)
            self.b_pos = smooth_step((xi - sg) / sg) * hi
            self.b_neg = smooth_step((-xi - sg) / sg) * hi

    def mult(self, psi: GridState, m) -> GridState:
        return GridState(self.grid, idft(psi).values * m)

    def fmult(self, psi: GridState, m) -> GridState:
        return idft(GridState(self.grid, dft(psi).values * m, "p"))

    def P_plus(self, psi):
        # right symbol: the position cutoff acts first
        return self.fmult(self.mult(psi, self.a_pos), self.b_pos) + self.fmult(self.mult(psi, self.a_neg), self.b_neg)

    def P_minus(self, psi):
        # left symbol: the momentum cutoff acts first
        return self.mult(self.fmult(psi, self.b_neg), self.a_pos) + self.mult(self.fmult(psi, self.b_pos), self.a_neg)


def propagation_decay(grid: Grid, spec: SymbolSpec, times, probes: Sequence[GridState] | None = None,
                      mass: float = 1.0, window=DEFAULT_WINDOW, seed: int = 0) -> DecayTable:
    """Measured ``max_probe || L e^{-itH0} R probe ||`` for one estimate family.

    ``propa1``: ``L = <x>^{-s} q(D)``, ``R = <x>^{-s}``.
    ``propa2``: ``L = <x>^{-s}``, ``R = P_+ <x>^delta``.
    ``propa3``: ``L = <x>^delta P_-``, ``R = P_+ <x>^delta``.

    The outgoing/incoming symbols are built in one dimension, where
    ``cos(x, xi)`` is the sign of ``x xi``; they are separable products of
    smooth cutoffs that vanish for ``|x| < sigma`` or ``|xi| < sigma``.
    """
    if spec.family != "propa1" and grid.dim != 1:
        raise ConfigError(f"{spec.family} symbols are implemented for one dimension")
    if probes is None:
        probes = probe_states(grid, seed=seed)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or np.any(times < 0):
        raise DomainError("times must be nonnegative and increasing")
    S = _Symbols(grid, spec)
    K = grid.kinetic(mass)
    hb = grid.hbar
    fam = spec.family
    # right factor applied once, then exact free evolution per time in momentum space
    starts = []
    for ph in probes:
        if fam == "propa1":
            r = S.mult(ph, S.weight(spec.s))
        else:
            r = S.P_plus(S.mult(ph, S.weight(-spec.delta)))
        starts.append(dft(r).values)
    vals = np.zeros(len(times))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, t in enumerate(times):
            ph_t = np.exp(-1j * t * K / hb)
            best = 0.0
            for f in starts:
                ev = GridState(grid, f * ph_t, "p")
                if fam == "propa1":
                    out = S.mult(S.fmult(ev, S.q), S.weight(spec.s))
                elif fam == "propa2":
                    out = S.mult(ev, S.weight(spec.s))
                else:
                    out = S.mult(S.P_minus(ev), S.weight(-spec.delta))
                best = max(best, out.norm())
            vals[i] = best
    floor = 1e-13 if fam == "propa3" else 0.0
    return DecayTable(times, vals, tuple(window), floor=floor, label=fam)
