"""Uniform periodic grids, the unitary DFT and the spectral theory of H0.

Conventions
-----------
Position nodes are ``x_j = -L + j dx`` with ``dx = 2L/n``.  Momentum nodes are
``xi_k = (k - n/2) dxi`` with ``dx dxi n = 2 pi hbar``, stored in ascending
(centred) order.  The transform is

    F psi(xi_k) = (2 pi hbar)^{-m/2} dx^m sum_j exp(-i x_j . xi_k / hbar) psi_j,

which is unitary between the two cell-weighted l^2 spaces.  The free
Hamiltonian is ``H0 = sum_a xi_a^2 / (2 m_a)``.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft
from scipy.integrate import lebedev_rule

from scatterlab.errors import DomainError, RangeError
from scatterlab.kernels import expsum, lattice_interp


class BoundaryMassWarning(UserWarning):
    """Probability mass close to the periodic boundary (aliasing risk)."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L, L)^m``.

    Parameters
    ----------
    dim : int
        Spatial dimension ``m`` (1 to 3 for physical grids; configuration
        grids of the many-body layer may use up to 6).
    points : int
        Points per axis, a power of two.
    L : float
        Half extent of the box.
    hbar : float
    """

    dim: int
    points: int
    L: float
    hbar: float = 1.0

    def __post_init__(self):
        if not 1 <= self.dim <= 6:
            raise DomainError("grid dimension must be between 1 and 6")
        n = int(self.points)
        if n < 2 or n & (n - 1):
            raise DomainError("points per axis must be a power of two")
        if not self.L > 0 or not self.hbar > 0:
            raise DomainError("half extent and hbar must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.points

    @property
    def dxi(self) -> float:
        return 2.0 * math.pi * self.hbar / (self.points * self.dx)

    @property
    def xi_max(self) -> float:
        """Upper edge ``pi hbar / dx`` of the momentum band."""
        return math.pi * self.hbar / self.dx

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def cell(self) -> float:
        return self.dx ** self.dim

    @property
    def momentum_cell(self) -> float:
        return self.dxi ** self.dim

    @cached_property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.points)

    @cached_property
    def xi(self) -> np.ndarray:
        return (np.arange(self.points) - self.points // 2) * self.dxi

    def mesh(self) -> list[np.ndarray]:
        """Open (broadcastable) position mesh, one array per axis."""
        return np.meshgrid(*([self.x] * self.dim), indexing="ij", sparse=True)

    def momentum_mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.xi] * self.dim), indexing="ij", sparse=True)

    def points_array(self) -> np.ndarray:
        """All position nodes, shape ``(n^m, m)`` in row-major order."""
        g = np.meshgrid(*([self.x] * self.dim), indexing="ij")
        return np.stack([a.ravel() for a in g], axis=-1)

    def kinetic(self, mass: float | Sequence[float] = 1.0) -> np.ndarray:
        """``sum_a xi_a^2 / (2 m_a)`` on the centred momentum lattice."""
        masses = np.broadcast_to(np.asarray(mass, dtype=float), (self.dim,))
        out = np.zeros(self.shape)
        for a, P in enumerate(self.momentum_mesh()):
            out = out + P**2 / (2.0 * masses[a])
        return out


@dataclass(frozen=True, eq=False)
class GridState:
    """Sampled wavefunction on a :class:`Grid`.

    ``rep`` is ``"x"`` for position samples and ``"p"`` for momentum samples
    on the centred lattice.  ``meta`` carries diagnostics from the producing
    operation.
    """

    grid: Grid
    values: np.ndarray
    rep: str = "x"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise DomainError("state contains non-finite values")
        if self.rep not in ("x", "p"):
            raise DomainError("rep must be 'x' or 'p'")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "GridState":
        return cls(grid, fn(*grid.mesh()) * np.ones(grid.shape))

    @property
    def weight(self) -> float:
        return self.grid.cell if self.rep == "x" else self.grid.momentum_cell

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.weight))

    def inner(self, other: "GridState") -> complex:
        """``(self, other) = sum self * conj(other) * cell``."""
        if other.rep != self.rep:
            other = dft(other) if self.rep == "p" else idft(other)
        return complex(np.sum(self.values * np.conj(other.values)) * self.weight)

    def normalized(self) -> "GridState":
        return GridState(self.grid, self.values / self.norm(), self.rep)

    def with_values(self, values, **meta) -> "GridState":
        return GridState(self.grid, values, self.rep, dict(meta))

    def __add__(self, other: "GridState") -> "GridState":
        return GridState(self.grid, self.values + other.values, self.rep)

    def __sub__(self, other: "GridState") -> "GridState":
        return GridState(self.grid, self.values - other.values, self.rep)

    def __mul__(self, c) -> "GridState":
        return GridState(self.grid, self.values * c, self.rep)

    __rmul__ = __mul__


# ----------------------------------------------------------------------------
# transforms
# ----------------------------------------------------------------------------

def _axes(m):
    return tuple(range(m))


def dft(state: GridState) -> GridState:
    """Unitary Fourier transform to the centred momentum lattice."""
    if state.rep == "p":
        return state
    g = state.grid
    ax = _axes(g.dim)
    v = sfft.fftshift(sfft.fftn(sfft.ifftshift(state.values, axes=ax), axes=ax, norm="ortho"), axes=ax)
    return GridState(g, v * (g.dx / g.dxi) ** (g.dim / 2), "p")


def idft(state: GridState) -> GridState:
    """Inverse of :func:`dft`."""
    if state.rep == "x":
        return state
    g = state.grid
    ax = _axes(g.dim)
    v = sfft.fftshift(sfft.ifftn(sfft.ifftshift(state.values, axes=ax), axes=ax, norm="ortho"), axes=ax)
    return GridState(g, v * (g.dxi / g.dx) ** (g.dim / 2), "x")


def boundary_mass(state: GridState, fraction: float = 1 / 16) -> float:
    """Probability in the outer ``fraction`` of the box along any axis."""
    if state.rep == "p":
        state = idft(state)
    g = state.grid
    edge = g.L * (1 - 2 * fraction)
    mask = np.zeros(g.shape, dtype=bool)
    for X in g.mesh():
        mask |= np.abs(X) >= edge
    tot = np.sum(np.abs(state.values) ** 2)
    return float(np.sum(np.abs(state.values[mask]) ** 2) / tot) if tot > 0 else 0.0


def check_boundary(state: GridState, tol: float = 1e-8) -> float:
    """Warn with :class:`BoundaryMassWarning` when boundary mass exceeds ``tol``."""
    bm = boundary_mass(state)
    if bm > tol:
        warnings.warn(f"boundary mass {bm:.3e} exceeds {tol:.1e}", BoundaryMassWarning, stacklevel=3)
    return bm


def free_propagate(state: GridState, t: float, mass: float | Sequence[float] = 1.0, check: bool = True) -> GridState:
    """Apply ``exp(-i t H0 / hbar)`` exactly on the lattice."""
    g = state.grid
    p = dft(state)
    out = idft(GridState(g, p.values * np.exp(-1j * t * g.kinetic(mass) / g.hbar), "p"))
    if check:
        check_boundary(out)
    return out


def apply_multiplier(state: GridState, mult: np.ndarray) -> GridState:
    """``F^{-1} mult F psi`` with ``mult`` on the centred momentum lattice."""
    p = dft(state)
    return idft(GridState(state.grid, p.values * mult, "p"))


def expectation_H0(state: GridState, mass=1.0) -> float:
    p = dft(state)
    return float(np.sum(p.grid.kinetic(mass) * np.abs(p.values) ** 2) * p.weight)


# ----------------------------------------------------------------------------
# serialisation
# ----------------------------------------------------------------------------

_HEADER = struct.Struct("<qqdd")


def dump_state(state: GridState, path) -> None:
    """Binary dump: little-endian header then interleaved re/im float64."""
    if state.rep == "p":
        state = idft(state)
    g = state.grid
    inter = np.empty(state.values.size * 2, dtype="<f8")
    flat = state.values.ravel(order="C")
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.dim, g.points, g.L, g.hbar))
        fh.write(inter.tobytes())


def load_state(path) -> GridState:
    with open(path, "rb") as fh:
        dim, points, L, hbar = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    g = Grid(int(dim), int(points), float(L), float(hbar))
    if data.size != 2 * points**dim:
        raise DomainError("truncated state file")
    return GridState(g, (data[0::2] + 1j * data[1::2]).reshape(g.shape))


def state_to_csv(state: GridState, path) -> None:
    """CSV with columns ``index0..index{m-1}, re, im``."""
    import csv

    g = state.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow([f"index{a}" for a in range(g.dim)] + ["re", "im"])
        for idx in np.ndindex(*g.shape):
            v = state.values[idx]
            w.writerow(list(idx) + [repr(float(v.real)), repr(float(v.imag))])


# ----------------------------------------------------------------------------
# off-lattice Fourier values
# ----------------------------------------------------------------------------

class FourierInterpolant:
    """Evaluate ``F psi`` at arbitrary momenta.

    The state is zero padded by ``oversample`` per axis, which refines the
    momentum lattice, then 8-point Lagrange interpolation is applied on the
    refined lattice.  For ``m = 1`` the exact trigonometric sum is used
    instead when ``exact`` is true.
    """

    def __init__(self, state: GridState, oversample: int | None = None, exact: bool | None = None):
        if state.rep == "p":
            state = idft(state)
        g = state.grid
        self.grid = g
        self.state = state
        self.exact = (g.dim == 1) if exact is None else exact
        if oversample is None:
            oversample = 4 if g.dim <= 2 else 2
        self.oversample = int(oversample)
        if not self.exact:
            n = g.points
            pad = (self.oversample - 1) * n // 2
            big = np.pad(state.values, [(pad, pad)] * g.dim)
            G2 = Grid(g.dim, n * self.oversample, g.L * self.oversample, g.hbar)
            # demodulate the centroid phase so the table varies slowly
            dens = np.abs(state.values) ** 2
            tot = dens.sum()
            self.centre = np.array([float(np.sum(dens * X) / tot) if tot > 0 else 0.0 for X in g.mesh()])
            phase = sum(P * c for P, c in zip(G2.momentum_mesh(), self.centre)) / g.hbar
            self.table = dft(GridState(G2, big)).values * np.exp(1j * phase)
            self.origin = np.full(g.dim, G2.xi[0])
            self.step = np.full(g.dim, G2.dxi)
            self.edge = G2.xi_max - 4 * G2.dxi
        else:
            self.edge = g.xi_max
        # momentum support radius (ignoring tails below 1e-13 of the peak)
        p = np.abs(dft(state).values)
        keep = p > 1e-13 * p.max() if p.max() > 0 else np.zeros_like(p, dtype=bool)
        rad = np.sqrt(sum(P**2 for P in g.momentum_mesh()))
        self.support_radius = float(rad[keep].max()) if keep.any() else 0.0
        self.support_radius = min(self.support_radius + 2 * g.dxi, self.edge)
        # spatial radius about the centroid holding all but 1e-13 of the norm
        dens = np.abs(state.values).ravel() ** 2
        c0 = getattr(self, "centre", np.zeros(g.dim))
        radx = np.sqrt(sum((X - c) ** 2 for X, c in zip(g.mesh(), c0))).ravel()
        self.extent = _quantile_radius(radx, dens, 1e-13)

    def __call__(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if xi.shape[-1] != self.grid.dim:
            xi = xi.reshape(-1, self.grid.dim)
        g = self.grid
        if self.exact:
            c = (2 * np.pi * g.hbar) ** (-g.dim / 2) * g.cell * self.state.values.ravel()
            return expsum(xi / g.hbar, -g.points_array(), c)
        return lattice_interp(self.table, self.origin, self.step, xi) * np.exp(-1j * (xi @ self.centre) / g.hbar)


def _quantile_radius(rad: np.ndarray, dens: np.ndarray, tail: float) -> float:
    tot = dens.sum()
    if tot <= 0:
        return 0.0
    order = np.argsort(rad)
    cum = np.cumsum(dens[order]) / tot
    i = min(int(np.searchsorted(cum, 1 - tail)), len(cum) - 1)
    return float(rad[order][i])


def _interpolant(state, oversample=None) -> FourierInterpolant:
    return state if isinstance(state, FourierInterpolant) else FourierInterpolant(state, oversample)


# ----------------------------------------------------------------------------
# sphere quadrature
# ----------------------------------------------------------------------------

def sphere_rule(m: int, order: int = 41) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``S^{m-1}``.

    ``m = 1``: the two points ``+-1``; ``m = 2``: ``order`` uniform angles;
    ``m = 3``: Lebedev rule of the given algebraic order (odd, <= 131).
    """
    if m == 1:
        return np.array([[1.0], [-1.0]]), np.ones(2)
    if m == 2:
        th = 2 * np.pi * np.arange(order) / order
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(order, 2 * np.pi / order)
    if m == 3:
        if order > 131:
            raise RangeError("Lebedev rules stop at order 131")
        order = max(3, order + (1 - order % 2))
        pts, w = lebedev_rule(order)
        return pts.T.copy(), w
    raise DomainError("sphere rules exist for m = 1, 2, 3")


def _aligned_rule3(axis: np.ndarray, n_theta: int, n_phi: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre in ``cos(theta)`` about ``axis`` times uniform azimuth."""
    c, wc = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    s = np.sqrt(1 - c**2)
    loc = np.stack(
        [np.outer(s, np.cos(phi)).ravel(), np.outer(s, np.sin(phi)).ravel(), np.repeat(c, n_phi)], axis=-1
    )
    a = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0, 0]) if abs(a[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = np.cross(a, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    R = np.stack([e1, e2, a], axis=-1)
    return loc @ R.T, np.repeat(wc, n_phi) * (2 * np.pi / n_phi)


@dataclass(frozen=True)
class SphereTrace:
    energy: float
    directions: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None = None

    def norm2(self) -> float:
        if self.weights is None:
            raise DomainError("trace was evaluated on bare directions, no quadrature weights")
        return float(np.sum(self.weights * np.abs(self.values) ** 2))


def _sphere_radius(lam: float, mass: float) -> float:
    if not lam > 0:
        raise DomainError("energy must be positive")
    return math.sqrt(2 * mass * lam)


def spectral_trace(state, lam: float, directions=None, mass: float = 1.0, order: int = 41) -> SphereTrace:
    """``F(lam) psi (omega) = m^{1/2} rho^{(m-2)/2} F psi(rho omega)``, ``rho = sqrt(2 m lam)``.

    Parameters
    ----------
    state : GridState or FourierInterpolant
    lam : float
        Energy.
    directions : array (k, m), optional
        Unit vectors.  When omitted the :func:`sphere_rule` nodes are used
        and quadrature weights are attached.
    mass : float
    order : int
        Sphere rule size when ``directions`` is omitted.
    """
    interp = _interpolant(state)
    g = interp.grid
    rho = _sphere_radius(lam, mass)
    if rho > interp.edge:
        raise RangeError(f"sphere radius {rho:.4g} beyond resolvable band {interp.edge:.4g}")
    weights = None
    if directions is None:
        directions, weights = sphere_rule(g.dim, order)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if directions.shape[-1] != g.dim:
        raise DomainError("direction dimension mismatch")
    if not np.allclose(np.linalg.norm(directions, axis=-1), 1.0, atol=1e-12):
        raise DomainError("directions must be unit vectors")
    vals = math.sqrt(mass) * rho ** ((g.dim - 2) / 2) * interp(rho * directions)
    return SphereTrace(lam, directions, vals, weights)


def spectral_density(f, g, lam: float, mass: float = 1.0, order: int = 41) -> complex:
    """``d/dlam (E0(lam) f, g) = (F(lam) f, F(lam) g)_{L^2(S^{m-1})}``."""
    tf = spectral_trace(f, lam, None, mass, order)
    tg = tf if g is f else spectral_trace(g, lam, None, mass, order)
    return complex(np.sum(tf.weights * tf.values * np.conj(tg.values)))


def _gauss_panels(a: float, b: float, panels: int, n: int = 16) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(a, b, panels + 1)
    h = np.diff(edges) / 2
    mid = (edges[1:] + edges[:-1]) / 2
    return (mid[:, None] + h[:, None] * x).ravel(), (h[:, None] * w).ravel()


def plancherel_integral(state, mass: float = 1.0, order: int = 41, panels: int = 64) -> float:
    """``int_0^inf ||F(lam) psi||^2 dlam`` by Gauss panels in ``rho = sqrt(2 m lam)``."""
    interp = _interpolant(state)
    g = interp.grid
    top = interp.support_radius
    rho, wr = _gauss_panels(0.0, top, panels)
    total = 0.0
    for r, w in zip(rho, wr):
        lam = r * r / (2 * mass)
        # dlam = rho drho / m
        total += spectral_trace(interp, lam, None, mass, order).norm2() * w * r / mass
    return float(total)


# ----------------------------------------------------------------------------
# resolvent
# ----------------------------------------------------------------------------

def free_resolvent(state: GridState, z: complex, mass: float = 1.0) -> GridState:
    """Lattice multiplier ``(H0 - z)^{-1}`` for ``Im z != 0`` or off-spectrum ``z``."""
    K = state.grid.kinetic(mass)
    den = K - z
    if np.any(den == 0):
        raise DomainError("z hits a lattice energy")
    return apply_multiplier(state, 1.0 / den)


def _polar_nodes(interp: FourierInterpolant, r_max: float, axis=None, order=None):
    """Sphere nodes adequate for phases up to ``rho_top * (r_max + extent)``."""
    g = interp.grid
    band = interp.support_radius * (r_max + interp.extent) / g.hbar
    if g.dim == 1:
        return sphere_rule(1)
    if g.dim == 2:
        return sphere_rule(2, int(math.ceil(band)) + 32)
    if axis is not None:
        n_theta = int(math.ceil(band / 2)) + 24
        n_phi = int(math.ceil(2 * interp.support_radius * interp.extent / g.hbar)) + 24
        return _aligned_rule3(np.asarray(axis, float), n_theta, n_phi)
    need = int(math.ceil(band)) + 12 if order is None else order
    if need > 131:
        raise RangeError(f"evaluation radius {r_max:.3g} needs sphere order {need} > 131")
    return sphere_rule(3, need)


@dataclass
class _RadialRule:
    nodes: np.ndarray  # rho nodes
    weights: np.ndarray
    pair: np.ndarray  # index of mirrored node for the principal-value window, -1 otherwise


def _pv_rule(k: float, top: float, h: float, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes for ``PV int_0^top f(rho)/(rho-k) d rho``.

    The window ``[k-a, k+a]`` is folded to ``int_0^a (f(k+s) - f(k-s))/s ds``;
    the remainder is plain Gauss panels.  Returns ``(rho, w, sgn)`` where the
    contribution is ``sum w * f(rho) * sgn``; ``sgn`` already contains the
    ``1/(rho - k)`` factor.
    """
    a = min(k, top - k)
    rho, coef = [], []
    if a > 0:
        s, ws = _gauss_panels(0.0, a, max(1, int(math.ceil(a / h))), n)
        rho += [k + s, k - s]
        coef += [ws / s, -ws / s]
    for lo, hi in ((0.0, k - a), (k + a, top)):
        if hi - lo > 1e-14:
            r, w = _gauss_panels(lo, hi, max(1, int(math.ceil((hi - lo) / h))), n)
            rho.append(r)
            coef.append(w / (r - k))
    return np.concatenate(rho), np.concatenate(coef)


def _resolvent_at(interp: FourierInterpolant, mu: float, sign: int, pts: np.ndarray, mass: float,
                  axis=None, n_gauss: int = 12):
    g = interp.grid
    m = g.dim
    k = math.sqrt(2 * mass * mu)
    top = interp.support_radius
    if k >= interp.edge:
        raise RangeError("energy outside the resolvable band")
    top = max(top, min(interp.edge, 1.25 * k))
    r_max = float(np.max(np.linalg.norm(pts, axis=-1))) if len(pts) else 0.0
    omegas, wo = _polar_nodes(interp, r_max, axis)
    h = min(top / 8, 9.0 * g.hbar / (r_max + interp.extent + 1.0))

    def run(ng):
        rho, coef = _pv_rule(k, top, h, ng)
        # 1/(rho^2/2m - mu) = 2m / ((rho - k)(rho + k)); coef carries 1/(rho - k)
        radial = coef * 2 * mass / (rho + k) * rho ** (m - 1)
        xi = (rho[:, None, None] * omegas[None, :, :]).reshape(-1, m)
        c = (radial[:, None] * wo[None, :]).ravel() * interp(xi)
        keep = np.abs(c) > 0
        pv = expsum(pts / g.hbar, xi[keep], c[keep])
        return pv

    pv = run(n_gauss)
    pv_coarse = run(n_gauss - 4)
    # delta part: i pi (m/k) k^{m-1} int_S e^{i k x.w} F psi(k w) dw
    xi_k = k * omegas
    ck = (np.pi * mass / k) * k ** (m - 1) * wo * interp(xi_k)
    delta = expsum(pts / g.hbar, xi_k, ck)
    pref = (2 * np.pi * g.hbar) ** (-m / 2)
    vals = pref * (pv + 1j * sign * delta)
    residual = float(np.max(np.abs(pref * (pv - pv_coarse)))) if len(pts) else 0.0
    return vals, residual


def free_resolvent_boundary(state, mu: float, sign: int = 1, mass: float = 1.0, points=None,
                            tol: float = 1e-6):
    """Boundary values ``R0(mu +- i0) psi`` from the principal-value/delta split.

    In polar momentum coordinates ``1/(rho^2/2m - mu -+ i0)`` is the principal
    value plus ``+- i pi (m/k) delta(rho - k)``.  The principal value is
    folded symmetrically about the pole; the delta part is a sphere
    quadrature, i.e. ``i pi F(mu)^* F(mu) psi``.

    Parameters
    ----------
    state : GridState or FourierInterpolant
    mu : float
        Energy, ``sqrt(2 m mu)`` must lie inside the band.
    sign : +1 or -1
    points : array (P, m), optional
        Evaluation points.  When omitted the whole grid is returned as a
        :class:`GridState` (intended for ``m <= 2``).
    tol : float
        Maximal accepted quadrature residual (difference between two Gauss
        orders, relative to the largest value).

    Returns
    -------
    GridState or ndarray
        ``meta['residual']`` carries the residual estimate for grid output.
    """
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    if not mu > 0:
        raise DomainError("mu must be positive")
    interp = _interpolant(state)
    g = interp.grid
    pts = g.points_array() if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    vals, res = _resolvent_at(interp, mu, sign, pts, mass)
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    if res > tol * scale:
        raise RangeError(f"principal-value quadrature residual {res:.2e} above tolerance")
    if points is None:
        return GridState(g, vals.reshape(g.shape), "x", {"residual": res})
    return vals


@dataclass(frozen=True)
class FarField:
    estimate: complex
    radii: np.ndarray
    values: np.ndarray

    def table(self) -> list[tuple[float, complex]]:
        return list(zip(self.radii.tolist(), self.values.tolist()))


def far_field_extract(state, mu: float, omega, radii, sign: int = 1) -> FarField:
    """Recover ``F(mu) psi(+-omega)`` from the radial asymptotics of ``R0(mu +- i0) psi``.

    Each radius gives ``(2pi)^{-1/2} e^{+-(m-3) pi i/4} (2mu)^{1/4} r^{(m-1)/2}
    e^{-+i sqrt(2mu) r} R0(mu +- i0) psi(r omega)``; the estimate is the last
    entry.  Units ``hbar = mass = 1``.
    """
    interp = _interpolant(state)
    g = interp.grid
    m = g.dim
    if m < 2:
        raise DomainError("far-field extraction needs m >= 2")
    if g.hbar != 1.0:
        raise DomainError("far-field extraction assumes hbar = 1")
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1) > 1e-12:
        raise DomainError("omega must be a unit vector")
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise DomainError("radii must be positive and increasing")
    if radii[-1] > g.L:
        raise RangeError(f"radius {radii[-1]:.3g} beyond the trusted region (half extent {g.L:.3g})")
    k = math.sqrt(2 * mu)
    pts = radii[:, None] * omega[None, :]
    axis = omega if m == 3 else None
    vals, _ = _resolvent_at(interp, mu, sign, pts, 1.0, axis=axis)
    est = (2 * np.pi) ** -0.5 * np.exp(sign * (m - 3) * np.pi * 1j / 4) * (2 * mu) ** 0.25 \
        * radii ** ((m - 1) / 2) * np.exp(-sign * 1j * k * radii) * vals
    return FarField(complex(est[-1]), radii, est)
