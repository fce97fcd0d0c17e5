"""Classical orbits of the cut-off long-range Hamiltonian.

The orbit solver integrates Hamilton's equations for

    H_rho(t, x, xi) = |xi|^2 / 2 + V_rho(t, x),
    V_rho(t, x) = V_L(x) chi(rho x) chi(<log<t>> x / <t>),

where ``chi`` is a smooth cutout vanishing on the unit ball and equal to one
outside the ball of radius two, and ``<t> = sqrt(1 + t^2)``.  Time is split
into Gauss-Legendre panels whose length grows linearly with ``|t|``; inside a
panel the integral system is solved by Picard iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from scatterlab._accel import HAVE_NUMBA
from scatterlab.errors import ConfigError, DomainError, SolverError
from scatterlab.kernels import ORBIT_KINDS, orbit_batch_numba
from scatterlab.potentials import PairPotential

NODES = 16
_H0 = 0.5     # first panel length
_GROWTH = 0.2  # panel length increment per unit |t|
_MAX_SPLIT = 12


def japanese(t):
    """``<t> = sqrt(1 + |t|^2)``."""
    t = np.asarray(t, dtype=float)
    return np.sqrt(1.0 + t * t)


def cutout(r) -> np.ndarray:
    """Smooth radial cutout: 0 for ``r <= 1``, 1 for ``r >= 2``."""
    return _step(np.asarray(r, dtype=float) - 1.0)[0]


def _step(u):
    """Smooth step on [0, 1] and its derivative."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0) & (u < 1)
    uu = np.where(inside, u, 0.5)
    with np.errstate(over="ignore", under="ignore"):
        f0 = np.exp(-1.0 / uu)
        f1 = np.exp(-1.0 / (1.0 - uu))
        s = f0 / (f0 + f1)
        ds = f0 * f1 * (1.0 / uu**2 + 1.0 / (1.0 - uu) ** 2) / (f0 + f1) ** 2
    val = np.where(inside, s, (u >= 1).astype(float))
    der = np.where(inside, ds, 0.0)
    return val, der


@lru_cache(maxsize=8)
def _panel_rule(n: int):
    """Gauss nodes, weights and the cumulative integration matrix on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    # Lagrange basis in Legendre coefficients: V c = I with V_ik = P_k(x_i)
    V = np.polynomial.legendre.legvander(x, n - 1)
    C = np.linalg.inv(V)
    # int_{-1}^{x} P_k = (P_{k+1} - P_{k-1}) / (2k + 1), and x + 1 for k = 0
    Pk = np.polynomial.legendre.legvander(x, n)
    I = np.empty((n, n))
    I[:, 0] = x + 1.0
    for k in range(1, n):
        I[:, k] = (Pk[:, k + 1] - Pk[:, k - 1]) / (2 * k + 1)
    return x, w, I @ C, C


def panel_edges(s: float, t: float) -> np.ndarray:
    """Panel boundaries from ``s`` to ``t`` (same sign, either direction)."""
    if s * t < 0:
        raise DomainError("orbit endpoints must lie on the same side of t = 0")
    a, b = sorted((abs(s), abs(t)))
    edges = [a]
    while edges[-1] < b:
        edges.append(min(b, edges[-1] + _H0 + _GROWTH * edges[-1]))
    edges = np.asarray(edges)
    if len(edges) > 2 and edges[-1] - edges[-2] < 0.25 * (edges[-2] - edges[-3]):
        edges = np.delete(edges, -2)  # avoid a sliver panel at the end
    sgn = -1.0 if (s < 0 or t < 0) else 1.0
    edges = sgn * edges
    return edges if abs(t) >= abs(s) else edges[::-1]


# ----------------------------------------------------------------------------
# solver
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class OrbitSolver:
    """Cut-off classical dynamics for a long-range potential.

    Parameters
    ----------
    potential : PairPotential or (V, gradV) pair of callables, optional
        The long-range part ``V_L``; callables take arrays of shape
        ``(..., m)``.  ``None`` means ``V_L = 0``.
    rho : float
        Spatial cutoff parameter in ``(0, 1)``.
    tol : float
        Picard increment tolerance (relative to the orbit scale).
    max_iter : int
    delta : float, optional
        Decay exponent of ``V_L``; defaults to the potential's ``eps``.
    """

    potential: object = None
    rho: float = 0.25
    tol: float = 1e-12
    max_iter: int = 200
    delta: float | None = None

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise DomainError("rho must lie in (0, 1)")
        if self.delta is None:
            d = self.potential.eps if isinstance(self.potential, PairPotential) else 0.5
            object.__setattr__(self, "delta", float(d))

    # -- potential ---------------------------------------------------------
    @property
    def is_free(self) -> bool:
        if self.potential is None:
            return True
        if isinstance(self.potential, PairPotential):
            return self.potential.kind == "zero" or not self.potential.is_long
        return False

    @property
    def delta0(self) -> float:
        return self.delta / 3.0

    @property
    def delta1(self) -> float:
        return self.delta / 3.0

    def _VL(self) -> tuple[Callable, Callable]:
        p = self.potential
        if isinstance(p, PairPotential):
            return p.long, p.grad_long
        return p

    def V_long(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_free:
            return np.zeros(x.shape[:-1])
        return self._VL()[0](x)

    def _cut(self, t, r):
        lam = japanese(np.log(japanese(t))) / japanese(t)
        a, da = _step(self.rho * r - 1.0)
        b, db = _step(lam * r - 1.0)
        return a * b, self.rho * da * b + a * lam * db

    def V_rho(self, t, x) -> np.ndarray:
        """Cut-off potential at time(s) ``t`` broadcast against ``x[..., :-1]``."""
        x = np.asarray(x, dtype=float)
        if self.is_free:
            return np.zeros(x.shape[:-1])
        r = np.sqrt(np.sum(x * x, axis=-1))
        c, _ = self._cut(t, r)
        return self.V_long(x) * c

    def grad_V_rho(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_free:
            return np.zeros_like(x)
        V, G = self._VL()
        r = np.sqrt(np.sum(x * x, axis=-1))
        c, dc = self._cut(t, r)
        unit = x / np.where(r > 0, r, 1.0)[..., None]
        return G(x) * c[..., None] + (V(x) * dc)[..., None] * unit

    # -- integration ---------------------------------------------------------
    def _picard(self, a, b, q, p):
        """Collocation solve on one panel; returns a per-sample success mask."""
        xg, wg, S, C = _panel_rule(NODES)
        h = 0.5 * (b - a)
        tau = a + h * (1.0 + xg)
        Q = q[:, None, :] + (tau - a)[None, :, None] * p[:, None, :]
        P = np.broadcast_to(p[:, None, :], Q.shape).copy()
        scale = 1.0 + np.max(np.abs(Q), axis=(1, 2)) + np.max(np.abs(P), axis=(1, 2))
        prev = np.full(len(q), np.inf)
        active = np.ones(len(q), dtype=bool)
        conv = np.zeros(len(q), dtype=bool)
        for it in range(self.max_iter):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            G = self.grad_V_rho(tau[None, :], Q[idx])
            Pn = p[idx, None, :] - h * np.einsum("ij,bjm->bim", S, G)
            Qn = q[idx, None, :] + h * np.einsum("ij,bjm->bim", S, Pn)
            inc = np.maximum(np.max(np.abs(Qn - Q[idx]), axis=(1, 2)), np.max(np.abs(Pn - P[idx]), axis=(1, 2)))
            Q[idx], P[idx] = Qn, Pn
            done = inc <= self.tol * scale[idx]
            conv[idx[done]] = True
            stalled = ~np.isfinite(inc) | ((it > 20) & (inc > 0.9 * prev[idx]))
            active[idx[done | stalled]] = False
            prev[idx] = inc
        G = self.grad_V_rho(tau[None, :], Q)
        # resolution check: trailing Legendre coefficients of the force
        tail = abs(h) * np.max(np.abs(np.einsum("kj,bjm->bkm", C[-2:], G)), axis=(1, 2))
        ok = conv & (tail <= 10 * self.tol * (1.0 + np.max(np.abs(P), axis=(1, 2))))
        return ok, tau, wg, h, Q, P, G

    def _panel(self, a, b, q, p, depth=0):
        ok, tau, wg, h, Q, P, G = self._picard(a, b, q, p)
        L = 0.5 * np.sum(P * P, axis=-1) - self.V_rho(tau[None, :], Q)
        qn = q + h * np.einsum("j,bjm->bm", wg, P)
        pn = p - h * np.einsum("j,bjm->bm", wg, G)
        An = h * (L @ wg)
        bad = np.flatnonzero(~ok)
        if bad.size:
            if depth >= _MAX_SPLIT:
                raise SolverError(f"Picard iteration did not contract near t={a:g}; reduce rho")
            mid = 0.5 * (a + b)
            q1, p1, A1 = self._panel(a, mid, q[bad], p[bad], depth + 1)
            q2, p2, A2 = self._panel(mid, b, q1, p1, depth + 1)
            qn[bad], pn[bad], An[bad] = q2, p2, A1 + A2
        return qn, pn, An

    def _kernel_args(self):
        """``(code, params)`` for the compiled kernel, or None when unsupported."""
        pot = self.potential
        if not isinstance(pot, PairPotential) or pot.kind not in ORBIT_KINDS:
            return None
        pr = pot.params
        if pot.kind != "gaussian" and pot.a is None:
            raise ConfigError(f"{pot.kind} potential needs a soft-core length; call resolved(dx)")
        a = 0.0 if pot.a is None else pot.a
        first = {"soft-coulomb": "Z", "inverse-power": "C", "gaussian": "V0", "yukawa": "g",
                 "screened-coulomb": "Z"}[pot.kind]
        second = {"inverse-power": "power", "gaussian": "width", "yukawa": "kappa",
                  "screened-coulomb": "kappa"}.get(pot.kind)
        prm = np.array([pr[first], pr[second] if second else 0.0, 0.0, a])
        return ORBIT_KINDS[pot.kind], prm

    def integrate(self, t: float, s: float, y, xi, backend: str | None = None):
        """Orbit from ``(y, xi)`` at time ``s`` to time ``t``.

        ``backend`` picks ``"numba"`` or ``"numpy"``; by default the compiled
        kernel is used for built-in radial potentials when numba is present.

        Returns
        -------
        q, p : arrays
            Phase-space point at time ``t``.
        action : array
            ``int_s^t (|p|^2/2 - V_rho) dtau`` along the orbit.
        """
        y = np.asarray(y, dtype=float)
        xi = np.asarray(xi, dtype=float)
        y, xi = np.broadcast_arrays(y, xi)
        shape = y.shape
        q = y.reshape(-1, shape[-1]).copy()
        p = xi.reshape(-1, shape[-1]).copy()
        if self.is_free or t == s:
            A = 0.5 * (t - s) * np.sum(p * p, axis=-1)
            return (q + (t - s) * p).reshape(shape), p.reshape(shape), A.reshape(shape[:-1])
        edges = panel_edges(s, t)
        use_nb = HAVE_NUMBA if backend is None else backend == "numba"
        args = self._kernel_args() if use_nb else None
        if args is not None:
            xg, wg, S, C = _panel_rule(NODES)
            q, p, A, ok = orbit_batch_numba(args[0], args[1], float(self.rho), edges, q, p, float(self.tol),
                                            int(self.max_iter), _MAX_SPLIT, xg, wg, S, C)
            if not np.all(ok):
                raise SolverError("Picard iteration did not contract; reduce rho")
            return q.reshape(shape), p.reshape(shape), A.reshape(shape[:-1])
        A = np.zeros(len(q))
        for a, b in zip(edges[:-1], edges[1:]):
            q, p, dA = self._panel(a, b, q, p)
            A += dA
        return q.reshape(shape), p.reshape(shape), A.reshape(shape[:-1])


def _check_times(t, s):
    if not ((t >= s >= 0) or (t <= s <= 0)):
        raise DomainError("need 0 <= s <= t or t <= s <= 0")


def classical_orbit(solver: OrbitSolver, t: float, s: float, y, xi):
    """``(q(t, s, y, xi), p(t, s, y, xi))`` for the cut-off dynamics.

    Examples
    --------
    >>> q, p = classical_orbit(OrbitSolver(), 2.0, 0.0, [1.0], [0.5])
    >>> float(q[0]), float(p[0])
    (2.0, 0.5)
    """
    _check_times(t, s)
    q, p, _ = solver.integrate(t, s, y, xi)
    return q, p


def orbit_inverse(solver: OrbitSolver, t: float, s: float, x, xi, tol: float = 1e-11,
                  max_iter: int | None = None) -> np.ndarray:
    """Initial momentum ``eta`` with ``p(t, s, x, eta) = xi``.

    The plain iteration ``eta <- xi - (p(t, s, x, eta) - eta)`` is run while
    it contracts; samples where it stalls are finished by Newton steps on the
    same fixed-point equation.  The residual ``|p - xi|`` is certified below
    ``tol * (1 + |xi|)``.
    """
    _check_times(t, s)
    x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
    if solver.is_free or xi.size == 0:
        return xi.copy()
    shape = xi.shape
    x = x.reshape(-1, shape[-1])
    xi = xi.reshape(-1, shape[-1])
    max_iter = solver.max_iter if max_iter is None else max_iter
    eta = xi.copy()
    bound = tol * (1.0 + np.max(np.abs(xi)))
    prev = np.full(len(xi), np.inf)
    newton = np.zeros(len(xi), dtype=bool)
    res = np.inf
    todo = np.arange(len(xi))
    for it in range(max_iter):
        _, p, _ = solver.integrate(t, s, x[todo], eta[todo])
        r = p - xi[todo]
        err = np.max(np.abs(r), axis=-1)
        res = float(np.max(err))
        if not np.isfinite(res):
            break
        keep = err > bound
        newton[todo] |= (err > 0.5 * prev[todo]) & keep
        prev[todo] = err
        todo, r = todo[keep], r[keep]
        if todo.size == 0:
            return eta.reshape(shape)
        step = r.copy()
        nw = newton[todo]
        if np.any(nw):
            sub = todo[nw]
            J = _jacobian(solver, t, s, x[sub], eta[sub])
            step[nw] = np.linalg.solve(J, r[nw][..., None])[..., 0]
        eta[todo] = eta[todo] - step
    raise SolverError(f"momentum inversion did not converge (residual {res:.2e}); reduce rho")


def _jacobian(solver, t, s, x, eta, h: float = 1e-6) -> np.ndarray:
    m = x.shape[-1]
    J = np.empty(x.shape[:-1] + (m, m))
    for k in range(m):
        e = np.zeros(m)
        e[k] = h
        _, pp, _ = solver.integrate(t, s, x, eta + e)
        _, pm, _ = solver.integrate(t, s, x, eta - e)
        J[..., :, k] = (pp - pm) / (2 * h)
    return J


def contraction_margin(solver: OrbitSolver, t: float, s: float, x, eta, h: float = 1e-6) -> float:
    """Largest ``||d p(t, s, x, eta) / d eta - I||`` over the samples.

    This is the Lipschitz constant of the map iterated by
    :func:`orbit_inverse`; the iteration contracts when it is below 1/2.
    """
    x, eta = np.broadcast_arrays(np.atleast_2d(np.asarray(x, float)), np.atleast_2d(np.asarray(eta, float)))
    J = _jacobian(solver, t, s, x, eta, h) - np.eye(x.shape[-1])
    return float(np.max(np.linalg.norm(J, ord=2, axis=(-2, -1))))


def reference_orbit(solver: OrbitSolver, t: float, s: float, y, xi, rtol: float = 1e-13):
    """One orbit by an adaptive Runge-Kutta (DOP853) integrator.

    Independent of the panel scheme; used to certify :func:`classical_orbit`.
    ``y`` and ``xi`` are single points of shape ``(m,)``.
    """
    from scipy.integrate import solve_ivp

    _check_times(t, s)
    y = np.asarray(y, float)
    m = y.size

    def rhs(tau, z):
        g = solver.grad_V_rho(tau, z[:m][None, :])[0]
        return np.concatenate([z[m:], -g])

    z0 = np.concatenate([y, np.asarray(xi, float)])
    if t == s:
        return z0[:m], z0[m:]
    sol = solve_ivp(rhs, (s, t), z0, method="DOP853", rtol=rtol, atol=rtol)
    if not sol.success:
        raise SolverError(sol.message)
    z = sol.y[:, -1]
    return z[:m], z[m:]
