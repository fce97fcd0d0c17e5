"""Eikonal phases phi_+-, the glued phase and its amplitude.

``phi(t, x, xi) = y . xi - int_0^t (|p|^2/2 - V_rho) dtau`` along the orbit
leaving ``x`` at time 0 with the momentum that reaches ``xi`` at time ``t``
(``y`` is the position at time ``t``).  It generates the canonical map, with
``grad_x phi = eta`` and ``d_t phi = |xi|^2/2 + V_rho(t, y)``.  The phases
``phi_+-`` are the limits of ``phi(t, x, xi) - phi(t, 0, xi)`` as
``t -> +-inf``; beyond the horizon the orbits are continued on straight
lines and the remaining ``d_t`` integral is added by quadrature.  What is
left decays like ``T^-2``, which a Richardson step between ``T/2`` and ``T``
removes to leading order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import RectBivariateSpline

from scatterlab.errors import ConfigError, ConvergenceError, DomainError, RangeError
from scatterlab.scattering.orbits import OrbitSolver, _step, cutout, orbit_inverse

T_MAX = 800.0
FD_STEP = 1e-3
_LAP_STEP = 0.05
_TAIL_X, _TAIL_W = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class EikonalValue:
    """``phi_+-`` samples with the horizon and a tail estimate."""

    value: np.ndarray
    tail: np.ndarray
    horizon: float


def _at_horizon(solver: OrbitSolver, T: float, x, xi):
    """``phi(T, x, xi)`` and the end point ``y``."""
    eta = orbit_inverse(solver, T, 0.0, x, xi)
    q, _, A = solver.integrate(T, 0.0, x, eta)
    return np.sum(q * xi, axis=-1) - A, q


def _straight_tail(solver: OrbitSolver, T: float, yx, y0, xi) -> np.ndarray:
    """``int_T^{+-inf} (V_rho(tau, y_x(tau)) - V_rho(tau, y_0(tau))) dtau`` on straight lines."""
    sgn = 1.0 if T > 0 else -1.0
    edges = np.concatenate([[0.0], abs(T) * np.geomspace(1 / 64, 1e6, 60)])
    out = np.zeros(yx.shape[:-1])
    for a, b in zip(edges[:-1], edges[1:]):
        u = 0.5 * (b - a) * (_TAIL_X + 1.0) + a
        tau = T + sgn * u
        step = (sgn * u)[:, None] * xi[..., None, :]
        vx = solver.V_rho(tau, yx[..., None, :] + step)
        v0 = solver.V_rho(tau, y0[..., None, :] + step)
        out += 0.5 * (b - a) * ((vx - v0) @ _TAIL_W)
    return sgn * out


def _limit(solver: OrbitSolver, T: float, x, xi) -> np.ndarray:
    fx, yx = _at_horizon(solver, T, x, xi)
    # the reference orbit from x = 0 depends on xi only
    uk, inv = np.unique(xi.reshape(-1, xi.shape[-1]), axis=0, return_inverse=True)
    f0, y0 = _at_horizon(solver, T, np.zeros_like(uk), uk)
    inv = inv.reshape(xi.shape[:-1])
    return fx - f0[inv] + _straight_tail(solver, T, yx, y0[inv], xi)


def _extrapolated(solver: OrbitSolver, T: float, x, xi):
    """Richardson value from horizons ``T/2`` and ``T`` and the size of the step."""
    full = _limit(solver, T, x, xi)
    corr = (full - _limit(solver, T / 2, x, xi)) / 3.0
    return full + corr, np.abs(corr)


def eikonal_phase(solver: OrbitSolver, x, xi, sign: int = 1, horizon: float = T_MAX,
                  tol: float | None = 1e-4) -> EikonalValue:
    """``phi_+(x, xi)`` (``sign=+1``) or ``phi_-`` (``sign=-1``).

    The tail estimate is the size of the extrapolation step, which bounds
    the error of the unextrapolated value at ``T``; a :class:`ConvergenceError` is raised when
    it exceeds ``tol`` (pass ``None`` to skip the check).
    """
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    x, xi = np.broadcast_arrays(np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(xi, float)))
    if solver.is_free:
        v = np.sum(x * xi, axis=-1)
        return EikonalValue(v, np.zeros_like(v), horizon)
    T = sign * float(horizon)
    val, tail = _extrapolated(solver, T, x, xi)
    if tol is not None and np.max(tail) > tol:
        raise ConvergenceError(
            f"phase limit not converged at horizon {horizon:g}: tail {np.max(tail):.2e} > {tol:.1e}"
        )
    return EikonalValue(val, tail, float(horizon))


# ----------------------------------------------------------------------------
# one-dimensional table
# ----------------------------------------------------------------------------

_MAGIC = b"SLPHASE1"
_HEAD = struct.Struct("<8s7d4q")


@dataclass(frozen=True, eq=False)
class PhaseTable:
    """Corrections ``phi_+- - x xi`` on a log-spaced lattice, one per quadrant.

    Quadrant ``k`` holds ``(sign(x), sign(xi))`` from :data:`QUADRANTS`; the
    phase used there is ``phi_+`` when ``x xi > 0`` and ``phi_-`` otherwise.
    """

    xs: np.ndarray
    ks: np.ndarray
    values: np.ndarray  # (4, nx, nk)
    tail: float = 0.0
    _splines: list = field(default_factory=list, repr=False)

    QUADRANTS = ((1, 1), (-1, -1), (1, -1), (-1, 1))

    def __post_init__(self):
        lx, lk = np.log(self.xs), np.log(self.ks)
        self._splines.extend(RectBivariateSpline(lx, lk, v, kx=3, ky=3) for v in self.values)

    def correction(self, x, xi) -> np.ndarray:
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        ax, ak = np.abs(x), np.abs(xi)
        if np.any(ax > self.xs[-1] * (1 + 1e-12)) or np.any(ak > self.ks[-1] * (1 + 1e-12)):
            raise RangeError("point outside the tabulated phase lattice")
        if np.any((ax < self.xs[0] * (1 - 1e-12)) | (ak < self.ks[0] * (1 - 1e-12))):
            raise RangeError("point inside the untabulated core")
        out = np.zeros(x.shape)
        for (sx, sk), spl in zip(self.QUADRANTS, self._splines):
            m = (np.sign(x) == sx) & (np.sign(xi) == sk)
            if np.any(m):
                out[m] = spl(np.log(ax[m]), np.log(ak[m]), grid=False)
        return out


def tabulate(solver: OrbitSolver, x_range, k_range, nx: int = 64, nk: int = 64,
             horizon: float = T_MAX, chunk: int = 2048) -> PhaseTable:
    """Tabulate the one-dimensional corrections on log-spaced nodes."""
    xs = np.geomspace(*x_range, nx)
    ks = np.geomspace(*k_range, nk)
    X, K = np.meshgrid(xs, ks, indexing="ij")
    vals = np.empty((4, nx, nk))
    tail = 0.0
    for q, (sx, sk) in enumerate(PhaseTable.QUADRANTS):
        x = (sx * X).reshape(-1, 1)
        k = (sk * K).reshape(-1, 1)
        sign = 1 if sx * sk > 0 else -1
        flat = np.empty(len(x))
        for a in range(0, len(x), chunk):
            v, t = _extrapolated(solver, sign * horizon, x[a:a + chunk], k[a:a + chunk])
            flat[a:a + chunk] = v
            tail = max(tail, float(np.max(t)))
        vals[q] = flat.reshape(nx, nk) - (sx * X) * (sk * K)
    return PhaseTable(xs, ks, vals, tail)


# ----------------------------------------------------------------------------
# glued phase
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhaseFunction:
    """Glued phase ``phi(x, xi)`` for the identification operator.

    ``phi = x.xi + [(phi_+ - x.xi) chi_+ + (phi_- - x.xi) chi_-] c(2 xi/d) c(2 x/R0)``
    with ``chi_+- = psi_+-(cos(x, xi))`` and ``c`` the radial cutout.
    """

    solver: OrbitSolver
    d: float = 0.5
    R0: float = 8.0
    sigma_minus: float = -0.2
    sigma_plus: float = 0.2
    horizon: float = T_MAX
    tol: float | None = 1e-4
    table: PhaseTable | None = None

    def __post_init__(self):
        if not -1 < self.sigma_minus < self.sigma_plus < 1:
            raise ConfigError("need -1 < sigma_minus < sigma_plus < 1")
        if not self.d > 0:
            raise ConfigError("d must be positive")
        if not self.R0 > 1:
            raise ConfigError("R0 must exceed 1")

    @property
    def is_free(self) -> bool:
        return self.solver.is_free

    def with_R0(self, R0: float) -> "PhaseFunction":
        return replace(self, R0=float(R0))

    # -- pieces ------------------------------------------------------------
    def chi_plus(self, x, xi) -> np.ndarray:
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        nx = np.linalg.norm(x, axis=-1)
        nk = np.linalg.norm(xi, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where((nx > 0) & (nk > 0), np.sum(x * xi, axis=-1) / (nx * nk), 0.0)
        return _step((c - self.sigma_minus) / (self.sigma_plus - self.sigma_minus))[0]

    def radial_cut(self, x, xi) -> np.ndarray:
        nx = np.linalg.norm(np.asarray(x, float), axis=-1)
        nk = np.linalg.norm(np.asarray(xi, float), axis=-1)
        return cutout(2 * nk / self.d) * cutout(2 * nx / self.R0)

    def correction_pm(self, x, xi, sign: int) -> np.ndarray:
        """``phi_+- - x.xi`` (table when available, orbits otherwise)."""
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        if self.is_free:
            return np.zeros(x.shape[:-1])
        if self.table is not None:
            if x.shape[-1] != 1:
                raise DomainError("phase table is one-dimensional")
            return self.table.correction(x[..., 0], xi[..., 0])
        flat_x = x.reshape(-1, x.shape[-1])
        flat_k = xi.reshape(-1, x.shape[-1])
        v = eikonal_phase(self.solver, flat_x, flat_k, sign, self.horizon, self.tol).value
        return (v - np.sum(flat_x * flat_k, axis=-1)).reshape(x.shape[:-1])

    def correction(self, x, xi) -> np.ndarray:
        """``phi(x, xi) - x.xi`` for the glued phase."""
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        out = np.zeros(x.shape[:-1])
        if self.is_free:
            return out
        cut = self.radial_cut(x, xi)
        cp = self.chi_plus(x, xi)
        for sign, w in ((1, cp), (-1, 1.0 - cp)):
            m = (cut * w) > 0
            if np.any(m):
                out[m] += self.correction_pm(x[m], xi[m], sign) * w[m] * cut[m]
        return out

    def __call__(self, x, xi) -> np.ndarray:
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        return np.sum(x * xi, axis=-1) + self.correction(x, xi)

    # -- derivatives ---------------------------------------------------------
    def _fd(self, fn, x, xi, h, order):
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        m = x.shape[-1]
        offs = np.array([-2, -1, 1, 2]) if order == 1 else np.array([-2, -1, 0, 1, 2])
        coef = (np.array([1, -8, 8, -1]) / (12 * h) if order == 1
                else np.array([-1, 16, -30, 16, -1]) / (12 * h * h))
        # evaluate every shifted point in a single batch
        shifts = np.zeros((m, len(offs), m))
        for a in range(m):
            shifts[a, :, a] = offs * h
        pts = x[..., None, None, :] + shifts
        vals = fn(pts, np.broadcast_to(xi[..., None, None, :], pts.shape))
        return vals @ coef  # (..., m)

    def grad_x(self, x, xi, sign: int | None = None, h: float = FD_STEP) -> np.ndarray:
        """``grad_x`` of the glued phase (or of ``phi_+-`` when ``sign`` is given)."""
        fn = self.correction if sign is None else (lambda a, b: self.correction_pm(a, b, sign))
        return np.asarray(xi, float) + self._fd(fn, x, xi, h, 1)

    def laplacian(self, x, xi, h: float = _LAP_STEP) -> np.ndarray:
        return np.sum(self._fd(self.correction, x, xi, h, 2), axis=-1)

    def eikonal_residual(self, x, xi, sign: int) -> np.ndarray:
        """``|grad phi_+-|^2/2 + V_L - |xi|^2/2`` by central differences."""
        g = self.grad_x(x, xi, sign)
        return 0.5 * np.sum(g * g, axis=-1) + self.solver.V_long(x) - 0.5 * np.sum(np.asarray(xi) ** 2, axis=-1)

    def amplitude(self, x, xi) -> np.ndarray:
        """``a = |grad phi|^2/2 + V_L - |xi|^2/2 - (i/2) Laplacian phi``."""
        g = self.grad_x(x, xi)
        re = 0.5 * np.sum(g * g, axis=-1) + self.solver.V_long(x) - 0.5 * np.sum(np.asarray(xi) ** 2, axis=-1)
        return re - 0.5j * self.laplacian(x, xi)

    # -- cache file ----------------------------------------------------------
    def save(self, path) -> None:
        """Write the 1-d table with a header ``(d, R0, sigma-, sigma+, rho, horizon, tail)``."""
        if self.table is None:
            raise ConfigError("only tabulated phases can be cached")
        t = self.table
        head = _HEAD.pack(_MAGIC, self.d, self.R0, self.sigma_minus, self.sigma_plus,
                          self.solver.rho, self.horizon, t.tail, len(t.xs), len(t.ks), 4, 0)
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(np.ascontiguousarray(t.xs, "<f8").tobytes())
            fh.write(np.ascontiguousarray(t.ks, "<f8").tobytes())
            fh.write(np.ascontiguousarray(t.values, "<f8").tobytes())

    @classmethod
    def load(cls, path, solver: OrbitSolver) -> "PhaseFunction":
        with open(path, "rb") as fh:
            raw = fh.read()
        magic, d, R0, sm, sp, rho, hor, tail, nx, nk, nq, _ = _HEAD.unpack_from(raw)
        if magic != _MAGIC:
            raise ConfigError("not a phase cache file")
        if abs(rho - solver.rho) > 1e-15:
            raise ConfigError("cache was built with a different rho")
        arr = np.frombuffer(raw, "<f8", offset=_HEAD.size)
        xs, ks = arr[:nx].copy(), arr[nx:nx + nk].copy()
        vals = arr[nx + nk:].reshape(nq, nx, nk).copy()
        return cls(solver, d, R0, sm, sp, hor, table=PhaseTable(xs, ks, vals, tail))


def build_phase_function(solver: OrbitSolver, d: float = 0.5, sigma_minus: float = -0.2,
                         sigma_plus: float = 0.2, R0: float = 8.0, grid=None, check: bool = True,
                         samples: int = 64, tol: float = 1e-4, seed: int = 0,
                         horizon: float = T_MAX, table_points: int = 64) -> PhaseFunction:
    """Build the glued phase and certify the eikonal equation on samples.

    With a one-dimensional ``grid`` the phases are tabulated over the whole
    grid so the identification operator can be assembled quickly.  The
    check draws ``samples`` points from the good cones
    ``|x| >= max(R0, 2/rho)``, ``|xi| >= d``, ``+-cos(x, xi) >= 1/2`` and
    raises :class:`ConvergenceError` listing the offending samples when the
    eikonal residual exceeds ``tol``.  ``table_points`` nodes per axis keep
    the spline error of the finite-difference gradient near ``3e-5``.
    """
    table = None
    if grid is not None:
        if grid.dim != 1:
            raise DomainError("phase tables are built for one-dimensional grids only")
        if not solver.is_free:
            table = tabulate(solver, (0.5, grid.L * 1.05), (d / 2, grid.xi_max * 1.05 + d),
                             nx=table_points, nk=table_points, horizon=horizon)
    ph = PhaseFunction(solver, d, R0, sigma_minus, sigma_plus, horizon, table=table)
    if check and not solver.is_free:
        m = 1 if grid is not None else 2
        x, xi, sg = good_cone_samples(m, samples, max(R0, 2 / solver.rho), d, seed=seed,
                                      r_max=(grid.L if grid is not None else None))
        bad = []
        for s in (1, -1):
            sel = sg == s
            res = np.abs(ph.eikonal_residual(x[sel], xi[sel], s))
            bad += [(tuple(x[sel][i]), tuple(xi[sel][i]), float(res[i])) for i in np.flatnonzero(res > tol)]
        if bad:
            raise ConvergenceError(f"eikonal residual above {tol:g} at {len(bad)} samples, e.g. {bad[:3]}")
    return ph


def good_cone_samples(m: int, count: int, R: float, d: float, sigma0: float = 0.5, seed: int = 0,
                      r_max: float | None = None, k_max: float = 3.0):
    """Random points of ``Gamma_+-(R, d, sigma0)``; returns ``(x, xi, sign)``."""
    rng = np.random.default_rng(seed)
    r_max = 4 * R if r_max is None else r_max
    r = rng.uniform(R, max(R, 0.9 * r_max), count)
    k = rng.uniform(d, max(d, k_max), count)
    sign = np.where(rng.random(count) < 0.5, 1, -1)
    if m == 1:
        u = rng.choice([-1.0, 1.0], count)[:, None]
        x = r[:, None] * u
        xi = (k * sign)[:, None] * u
        return x, xi, sign
    out_x = np.empty((count, m))
    out_k = np.empty((count, m))
    for i in range(count):
        while True:
            a = rng.normal(size=m)
            b = rng.normal(size=m)
            a /= np.linalg.norm(a)
            b /= np.linalg.norm(b)
            if sign[i] * (a @ b) >= sigma0:
                break
        out_x[i] = r[i] * a
        out_k[i] = k[i] * b
    return out_x, out_k, sign
