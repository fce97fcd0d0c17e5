"""Pair potentials, their short/long-range split, and N-body assembly.

Every built-in kind is soft-cored, so values are finite on a grid.  The
long-range part is always smooth; its gradient is provided analytically
for the classical orbit solver.

Examples
--------
>>> from scatterlab.coords import jacobi_frame
>>> v = PairPotential("gaussian", {"V0": -2.0}).resolved(0.1)
>>> asm = PotentialAssembly(jacobi_frame([1, 1], d=1), {(1, 2): v})
>>> float(asm.total([[0.0]]))
-2.0
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from scatterlab.coords import (
    ClusterDecomposition,
    JacobiFrame,
    _as_config,
    all_pairs,
    intercluster_pairs,
    intracluster_pairs,
)
from scatterlab.errors import ConfigError, DomainError

KINDS = ("gaussian", "yukawa", "screened-coulomb", "soft-coulomb", "inverse-power", "zero")

# parameter names with defaults; None marks a required entry
_PARAMS = {
    "gaussian": {"V0": None, "width": 1.0},
    "yukawa": {"g": None, "kappa": None},
    "screened-coulomb": {"Z": None, "kappa": None},
    "soft-coulomb": {"Z": None},
    "inverse-power": {"C": None, "power": None},
    "zero": {},
}
_SINGULAR = ("yukawa", "screened-coulomb", "soft-coulomb", "inverse-power")


def _radius(r):
    r = np.asarray(r, dtype=float)
    return np.sqrt(np.sum(r * r, axis=-1))


@dataclass(frozen=True)
class PairPotential:
    """A radial pair potential ``V(r) = V_S(r) + V_L(r)``.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS`.
    params : mapping
        Kind-specific constants (see ``_PARAMS``).
    a : float or None
        Soft-core length replacing ``r`` by ``sqrt(r^2 + a^2)`` in singular
        kinds.  ``None`` is resolved to ``2 dx`` by :meth:`resolved`.
    delta, eps : float
        Declared decay exponents of the short part and of the long part's
        gradient.
    long_range : bool or None
        Force the classification; by default soft-Coulomb and inverse
        powers with ``power <= 1`` are long range, everything else short.
    """

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)
    a: float | None = None
    delta: float = 1.0
    eps: float = 0.5
    long_range: bool | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown potential kind {self.kind!r}")
        spec = _PARAMS[self.kind]
        extra = set(self.params) - set(spec)
        if extra:
            raise ConfigError(f"unknown parameters for {self.kind}: {sorted(extra)}")
        full = {}
        for k, default in spec.items():
            if k in self.params:
                full[k] = float(self.params[k])
            elif default is None:
                raise ConfigError(f"{self.kind} needs parameter {k!r}")
            else:
                full[k] = default
        object.__setattr__(self, "params", full)
        if self.a is not None and not self.a > 0:
            raise ConfigError("soft-core length a must be positive")
        if self.kind in ("yukawa", "screened-coulomb") and not full["kappa"] > 0:
            raise ConfigError("screening constant kappa must be positive")
        if self.kind == "gaussian" and not full["width"] > 0:
            raise ConfigError("gaussian width must be positive")

    # -- classification ---------------------------------------------------
    @property
    def is_long(self) -> bool:
        if self.long_range is not None:
            return self.long_range
        if self.kind == "soft-coulomb":
            return True
        if self.kind == "inverse-power":
            return self.params["power"] <= 1.0
        return False

    def resolved(self, dx: float) -> "PairPotential":
        """Copy with an unresolved soft core set to ``2 dx``."""
        if self.a is None and self.kind in _SINGULAR:
            return replace(self, a=2.0 * float(dx))
        return self

    def _soft(self, r):
        if self.a is None:
            raise ConfigError(f"{self.kind} potential needs a soft-core length; call resolved(dx)")
        return np.sqrt(r * r + self.a**2)

    # -- radial profile and derivative --------------------------------------
    def radial(self, r) -> np.ndarray:
        """``V(r)`` for scalar distances."""
        r = np.asarray(r, dtype=float)
        p = self.params
        k = self.kind
        if k == "zero":
            return np.zeros_like(r)
        if k == "gaussian":
            return p["V0"] * np.exp(-((r / p["width"]) ** 2))
        s = self._soft(r)
        if k == "yukawa":
            return p["g"] * np.exp(-p["kappa"] * r) / s
        if k == "screened-coulomb":
            return p["Z"] * np.exp(-p["kappa"] * r) / s
        if k == "soft-coulomb":
            return p["Z"] / s
        return p["C"] / s ** p["power"]

    def radial_derivative(self, r) -> np.ndarray:
        """``dV/dr``."""
        r = np.asarray(r, dtype=float)
        p = self.params
        k = self.kind
        if k == "zero":
            return np.zeros_like(r)
        if k == "gaussian":
            w = p["width"]
            return -2 * r / w**2 * p["V0"] * np.exp(-((r / w) ** 2))
        s = self._soft(r)
        if k in ("yukawa", "screened-coulomb"):
            c = p["g"] if k == "yukawa" else p["Z"]
            kap = p["kappa"]
            return c * np.exp(-kap * r) * (-kap / s - r / s**3)
        if k == "soft-coulomb":
            return -p["Z"] * r / s**3
        n = p["power"]
        return -n * p["C"] * r / s ** (n + 2)

    # -- vector evaluation ---------------------------------------------------
    def __call__(self, r) -> np.ndarray:
        return self.radial(_radius(r))

    def short(self, r) -> np.ndarray:
        return np.zeros(np.shape(r)[:-1]) if self.is_long else self(r)

    def long(self, r) -> np.ndarray:
        return self(r) if self.is_long else np.zeros(np.shape(r)[:-1])

    def grad_long(self, r) -> np.ndarray:
        """Gradient of the long part with respect to the vector ``r``."""
        r = np.asarray(r, dtype=float)
        if not self.is_long:
            return np.zeros_like(r)
        rad = _radius(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            fac = np.where(rad > 0, self.radial_derivative(rad) / np.where(rad > 0, rad, 1.0), 0.0)
        return fac[..., None] * r


# ----------------------------------------------------------------------------
# assembly
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialAssembly:
    """``V = sum_alpha V_alpha(x_alpha)`` over a :class:`JacobiFrame`.

    ``pairs`` maps ``(i, j)`` with ``i < j`` (1-based) to a
    :class:`PairPotential`; unlisted pairs do not interact.
    """

    frame: JacobiFrame
    pairs: Mapping[tuple[int, int], PairPotential]

    def __post_init__(self):
        clean = {}
        valid = set(all_pairs(self.frame.N))
        for pair, pot in self.pairs.items():
            i, j = sorted(int(v) for v in pair)
            if (i, j) not in valid:
                raise DomainError(f"pair {pair} invalid for N={self.frame.N}")
            if (i, j) in clean:
                raise DomainError(f"pair {(i, j)} listed twice")
            clean[(i, j)] = pot
        object.__setattr__(self, "pairs", clean)

    def resolved(self, dx: float) -> "PotentialAssembly":
        return PotentialAssembly(self.frame, {k: v.resolved(dx) for k, v in self.pairs.items()})

    def pair_term(self, pair, x, part: str = "total") -> np.ndarray:
        x = _as_config(self.frame, x)
        r = np.einsum("k,...kd->...d", self.frame.pair_row(pair), x)
        pot = self.pairs[pair]
        return {"total": pot, "short": pot.short, "long": pot.long}[part](r)

    def _sum(self, pairs, x, part="total") -> np.ndarray:
        x = _as_config(self.frame, x)
        out = np.zeros(x.shape[:-2])
        for pair in pairs:
            if pair in self.pairs:
                out = out + self.pair_term(pair, x, part)
        return out

    def total(self, x) -> np.ndarray:
        """``V(x)`` at Jacobi configurations ``x`` of shape ``(..., N-1, d)``."""
        return self._sum(self.pairs, x)

    def short(self, x) -> np.ndarray:
        return self._sum(self.pairs, x, "short")

    def long(self, x) -> np.ndarray:
        return self._sum(self.pairs, x, "long")

    def grad_long(self, x) -> np.ndarray:
        """Gradient of the long part with respect to the Jacobi coordinates."""
        x = _as_config(self.frame, x)
        g = np.zeros_like(x)
        for pair, pot in self.pairs.items():
            row = self.frame.pair_row(pair)
            r = np.einsum("k,...kd->...d", row, x)
            g = g + row[:, None] * pot.grad_long(r)[..., None, :]
        return g

    @property
    def has_long(self) -> bool:
        return any(p.is_long for p in self.pairs.values())

    def on_grid(self, grid, part: str = "total") -> np.ndarray:
        """Sample on a grid whose axes are the flattened Jacobi components."""
        f = self.frame
        if grid.dim != f.ndof:
            raise DomainError(f"grid dimension {grid.dim} != {f.ndof} Jacobi components")
        X = np.stack(np.broadcast_arrays(*grid.mesh()), axis=-1).reshape(grid.shape + (f.N - 1, f.d))
        return self._sum(self.pairs, X, part)


def evaluate_total(assembly: PotentialAssembly, x) -> np.ndarray:
    return assembly.total(x)


def cluster_split(assembly: PotentialAssembly, b: ClusterDecomposition) -> tuple[Callable, Callable]:
    """Evaluators ``(V_b, I_b)``: intra-cluster and inter-cluster sums."""
    if b.N != assembly.frame.N:
        raise DomainError("decomposition and frame disagree on N")
    intra = intracluster_pairs(b)
    inter = intercluster_pairs(b)

    def V_b(x):
        return assembly._sum(intra, x)

    def I_b(x):
        return assembly._sum(inter, x)

    return V_b, I_b


# ----------------------------------------------------------------------------
# decay verification
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    part: str
    exponent: float
    constant: float
    bound: float
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class DecayReport:
    fits: tuple[DecayFit, ...]

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.fits)

    @property
    def fitted_exponent(self) -> float:
        return self.fits[0].exponent if self.fits else -math.inf

    @property
    def constant(self) -> float:
        return self.fits[0].constant if self.fits else 0.0


def _loglog_fit(r, y, bound, part, slack):
    y = np.abs(y)
    tiny = y <= 1e-300
    if np.all(tiny):
        return DecayFit(part, -math.inf, 0.0, bound, True, "identically zero on samples")
    if np.any(tiny):
        # underflow inside the window: faster than any power
        return DecayFit(part, -math.inf, float(y[~tiny][0] * r[~tiny][0]), bound, True, "underflow, super-polynomial")
    slope, icpt = np.polyfit(np.log(r), np.log(y), 1)
    ok = slope <= bound + slack
    note = "" if ok else f"slope {slope:.3f} above -{-bound:.3f} (+{slack})"
    if slope >= 0:
        note = f"non-decaying sample (slope {slope:.3f})"
        ok = False
    return DecayFit(part, float(slope), float(math.exp(icpt)), bound, bool(ok), note)


def decay_check(potential: PairPotential, radii, slack: float = 0.15) -> DecayReport:
    """Fit ``|V_S| ~ C r^p`` and ``|V_L'| ~ C r^p`` on a log-log scale.

    The short part passes when ``p <= -(1 + delta) + slack`` and the long
    part when ``p <= -(1 + eps) + slack``.  The check is advisory.
    """
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or len(r) < 8:
        raise DomainError("decay_check needs at least 8 radii")
    if np.any(np.diff(r) <= 0) or r[0] <= 0:
        raise DomainError("radii must be positive and increasing")
    fits = []
    if potential.is_long:
        fits.append(_loglog_fit(r, potential.radial_derivative(r), -(1 + potential.eps), "long", slack))
    else:
        fits.append(_loglog_fit(r, potential.radial(r), -(1 + potential.delta), "short", slack))
    return DecayReport(tuple(fits))
