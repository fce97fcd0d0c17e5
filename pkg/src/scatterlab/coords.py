"""Cluster decompositions and Jacobi coordinate frames.

Particles are labelled ``1..N``.  A configuration with the centre of mass
removed is stored as an array of shape ``(N-1, d)`` of Jacobi vectors; the
mass-weighted inner product is ``sum_i mu_i x_i . y_i``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from scatterlab.errors import DomainError

Pair = tuple[int, int]


@dataclass(frozen=True)
class ClusterDecomposition:
    """Partition of ``{1..N}`` into disjoint nonempty clusters.

    Clusters are stored as sorted tuples and ordered by their least element,
    so two decompositions describing the same partition compare equal.
    """

    clusters: tuple[tuple[int, ...], ...]
    N: int

    def __init__(self, clusters: Iterable[Iterable[int]], N: int | None = None):
        cl = [tuple(sorted(int(i) for i in c)) for c in clusters]
        if any(len(c) == 0 for c in cl):
            raise DomainError("empty cluster")
        flat = [i for c in cl for i in c]
        if N is None:
            N = max(flat) if flat else 0
        if len(flat) != len(set(flat)):
            raise DomainError("clusters are not disjoint")
        if sorted(flat) != list(range(1, N + 1)):
            raise DomainError(f"clusters do not cover 1..{N}")
        cl.sort(key=lambda c: c[0])
        object.__setattr__(self, "clusters", tuple(cl))
        object.__setattr__(self, "N", int(N))

    @classmethod
    def parse(cls, text: str) -> "ClusterDecomposition":
        """Inverse of ``str``: ``"{1,2}|{3}"``."""
        parts = [p.strip() for p in text.split("|")]
        cl = []
        for p in parts:
            if not (p.startswith("{") and p.endswith("}")):
                raise DomainError(f"malformed cluster {p!r}")
            body = p[1:-1].strip()
            cl.append([int(s) for s in body.split(",")] if body else [])
        return cls(cl)

    @classmethod
    def singletons(cls, N: int) -> "ClusterDecomposition":
        return cls([[i] for i in range(1, N + 1)], N)

    @classmethod
    def single(cls, N: int) -> "ClusterDecomposition":
        return cls([list(range(1, N + 1))], N)

    def __str__(self) -> str:
        return "|".join("{" + ",".join(map(str, c)) + "}" for c in self.clusters)

    def __len__(self) -> int:
        return len(self.clusters)

    @property
    def size(self) -> int:
        """``|b|``, the number of clusters."""
        return len(self.clusters)

    def cluster_of(self, i: int) -> int:
        for k, c in enumerate(self.clusters):
            if i in c:
                return k
        raise DomainError(f"particle {i} not in 1..{self.N}")

    def contains_pair(self, pair: Pair) -> bool:
        """True when both particles of ``pair`` share a cluster (``alpha <= b``)."""
        i, j = pair
        return self.cluster_of(i) == self.cluster_of(j)


def refines(b: ClusterDecomposition, a: ClusterDecomposition) -> bool:
    """True iff every cluster of ``b`` lies inside some cluster of ``a``."""
    if b.N != a.N:
        raise DomainError("decompositions have different particle counts")
    owner = {i: k for k, c in enumerate(a.clusters) for i in c}
    return all(len({owner[i] for i in c}) == 1 for c in b.clusters)


def all_pairs(N: int) -> list[Pair]:
    return list(itertools.combinations(range(1, N + 1), 2))


def intercluster_pairs(b: ClusterDecomposition) -> list[Pair]:
    """Pairs ``{i, j}`` whose members sit in different clusters of ``b``."""
    return [p for p in all_pairs(b.N) if not b.contains_pair(p)]


def intracluster_pairs(b: ClusterDecomposition) -> list[Pair]:
    return [p for p in all_pairs(b.N) if b.contains_pair(p)]


def _set_partitions(items: list[int]) -> Iterator[list[list[int]]]:
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[head] + part[k]] + part[k + 1:]
        yield [[head]] + part


def all_decompositions(N: int, size: int | None = None) -> list[ClusterDecomposition]:
    """Every cluster decomposition of ``{1..N}``, optionally with ``|b| = size``.

    Output order is deterministic (sorted by the string form).
    """
    out = {str(d): d for d in (ClusterDecomposition(p, N) for p in _set_partitions(list(range(1, N + 1))))}
    decs = [out[k] for k in sorted(out)]
    if size is not None:
        decs = [d for d in decs if d.size == size]
    return decs


def _jacobi_rows(masses: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Rows ``x_i = X_{o(i+1)} - sum_{j<=i} m_j X_{o(j)} / M_i`` (0-based order)."""
    n = len(order)
    A = np.zeros((n - 1, len(masses)))
    for i in range(n - 1):
        head = [order[j] for j in range(i + 1)]
        M = masses[head].sum()
        A[i, order[i + 1]] += 1.0
        for j in head:
            A[i, j] -= masses[j] / M
    return A


def _jacobi_reduced(masses: np.ndarray, order: Sequence[int]) -> np.ndarray:
    mu = []
    for i in range(len(order) - 1):
        M = masses[list(order[: i + 1])].sum()
        m = masses[order[i + 1]]
        mu.append(1.0 / (1.0 / m + 1.0 / M))
    return np.array(mu)


@dataclass(frozen=True, eq=False)
class JacobiFrame:
    """Jacobi coordinates for ``N`` particles in ``R^d``.

    Parameters
    ----------
    masses : sequence of float
        Particle masses ``m_1..m_N``.
    d : int
        Space dimension, 1 to 3.
    permutation : sequence of int, optional
        Particle order (1-based) used to build the Jacobi chain.  Defaults to
        the identity.

    Attributes
    ----------
    reduced_masses : ndarray, shape (N-1,)
    to_jacobi : ndarray, shape (N-1, N)
        Maps particle positions to Jacobi vectors, acting row-wise on each
        spatial component.
    from_jacobi : ndarray, shape (N, N-1)
        Inverse map onto centre-of-mass-free particle positions.
    """

    masses: np.ndarray
    d: int = 3
    permutation: tuple[int, ...] = field(default=())

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float).copy()
        if m.ndim != 1 or len(m) < 2:
            raise DomainError("need at least two masses")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise DomainError("masses must be positive")
        if self.d not in (1, 2, 3):
            raise DomainError("space dimension must be 1, 2 or 3")
        perm = tuple(self.permutation) or tuple(range(1, len(m) + 1))
        if sorted(perm) != list(range(1, len(m) + 1)):
            raise DomainError("permutation must reorder 1..N")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "permutation", perm)

    @property
    def N(self) -> int:
        return len(self.masses)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def ndof(self) -> int:
        """Dimension ``d (N-1)`` of the configuration space."""
        return self.d * (self.N - 1)

    @cached_property
    def reduced_masses(self) -> np.ndarray:
        return _jacobi_reduced(self.masses, [p - 1 for p in self.permutation])

    @cached_property
    def to_jacobi(self) -> np.ndarray:
        return _jacobi_rows(self.masses, [p - 1 for p in self.permutation])

    @cached_property
    def from_jacobi(self) -> np.ndarray:
        B = np.vstack([self.to_jacobi, self.masses / self.total_mass])
        return np.linalg.inv(B)[:, : self.N - 1]

    def jacobi(self, X: np.ndarray) -> np.ndarray:
        """Particle positions ``(..., N, d)`` to Jacobi vectors ``(..., N-1, d)``."""
        return np.einsum("ij,...jk->...ik", self.to_jacobi, np.asarray(X, dtype=float))

    def particles(self, x: np.ndarray) -> np.ndarray:
        """Jacobi vectors to particle positions with centre of mass at 0."""
        return np.einsum("ij,...jk->...ik", self.from_jacobi, np.asarray(x, dtype=float))

    def pair_row(self, pair: Pair) -> np.ndarray:
        """Coefficients ``c`` with ``X_j - X_i = sum_k c_k x_k``."""
        i, j = pair
        if not (1 <= i <= self.N and 1 <= j <= self.N and i != j):
            raise DomainError(f"invalid pair {pair}")
        return self.from_jacobi[j - 1] - self.from_jacobi[i - 1]

    def pair_reduced_mass(self, pair: Pair) -> float:
        mi, mj = self.masses[pair[0] - 1], self.masses[pair[1] - 1]
        return float(mi * mj / (mi + mj))

    def transition(self, other: "JacobiFrame") -> np.ndarray:
        """Matrix ``U`` with ``x_other = U x_self`` (same masses, other order)."""
        if not np.allclose(other.masses, self.masses) or other.d != self.d:
            raise DomainError("frames describe different systems")
        return other.to_jacobi @ self.from_jacobi


def jacobi_frame(masses: Sequence[float], d: int = 3, permutation: Sequence[int] | None = None) -> JacobiFrame:
    """Build a :class:`JacobiFrame`; see the class for parameters."""
    return JacobiFrame(np.asarray(masses, dtype=float), d, tuple(permutation or ()))


def _as_config(frame: JacobiFrame, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = frame.N - 1
    if x.shape[-2:] == (n, frame.d):
        return x
    if x.shape[-1] == n * frame.d:
        return x.reshape(x.shape[:-1] + (n, frame.d))
    raise DomainError(f"configuration shape {x.shape} does not match frame ({n}, {frame.d})")


def mass_inner_product(frame: JacobiFrame, x, y) -> np.ndarray | float:
    """``sum_i mu_i x_i . y_i`` for configurations of shape ``(..., N-1, d)``."""
    x = _as_config(frame, x)
    y = _as_config(frame, y)
    val = np.einsum("i,...ik,...ik->...", frame.reduced_masses, x, y)
    return float(val) if np.ndim(val) == 0 else val


def mass_norm2(frame: JacobiFrame, x) -> np.ndarray | float:
    return mass_inner_product(frame, x, x)


def pair_vector(frame: JacobiFrame, x, pair: Pair) -> np.ndarray:
    """Relative position ``X_j - X_i`` of the pair ``(i, j)``."""
    x = _as_config(frame, x)
    return np.einsum("k,...kd->...d", frame.pair_row(pair), x)


def pair_norm2(frame: JacobiFrame, x, pair: Pair) -> np.ndarray:
    """Mass-metric squared length ``mu_ij |X_j - X_i|^2`` of a pair."""
    r = pair_vector(frame, x, pair)
    return frame.pair_reduced_mass(pair) * np.sum(r * r, axis=-1)


@dataclass(frozen=True, eq=False)
class ClusteredFrame:
    """Clustered Jacobi coordinates ``x = (x_b, x^b)``.

    ``x_b`` are Jacobi vectors between cluster centres of mass (clusters in
    canonical order), ``x^b`` the concatenated internal Jacobi vectors of
    each cluster.  Both are linear in the base Jacobi vector ``x``.
    """

    base: JacobiFrame
    decomposition: ClusterDecomposition

    def __post_init__(self):
        if self.decomposition.N != self.base.N:
            raise DomainError("decomposition and frame have different N")

    @cached_property
    def cluster_masses(self) -> np.ndarray:
        m = self.base.masses
        return np.array([m[[i - 1 for i in c]].sum() for c in self.decomposition.clusters])

    @cached_property
    def _com_rows(self) -> np.ndarray:
        m = self.base.masses
        R = np.zeros((self.decomposition.size, self.base.N))
        for k, c in enumerate(self.decomposition.clusters):
            idx = [i - 1 for i in c]
            R[k, idx] = m[idx] / m[idx].sum()
        return R

    @cached_property
    def inter_matrix(self) -> np.ndarray:
        """``x_b = K_b x`` with ``K_b`` of shape ``(|b|-1, N-1)``."""
        A = _jacobi_rows(self.cluster_masses, list(range(self.decomposition.size)))
        return A @ self._com_rows @ self.base.from_jacobi

    @cached_property
    def inter_reduced_masses(self) -> np.ndarray:
        return _jacobi_reduced(self.cluster_masses, list(range(self.decomposition.size)))

    @cached_property
    def internal_matrix(self) -> np.ndarray:
        """``x^b = K^b x`` with ``K^b`` of shape ``(N-|b|, N-1)``."""
        rows = []
        for c in self.decomposition.clusters:
            if len(c) < 2:
                continue
            sub = np.array([self.base.masses[i - 1] for i in c])
            A = _jacobi_rows(sub, list(range(len(c))))
            E = np.zeros((len(c), self.base.N))
            for k, i in enumerate(c):
                E[k, i - 1] = 1.0
            rows.append(A @ E @ self.base.from_jacobi)
        if not rows:
            return np.zeros((0, self.base.N - 1))
        return np.vstack(rows)

    @cached_property
    def internal_reduced_masses(self) -> np.ndarray:
        mus = []
        for c in self.decomposition.clusters:
            if len(c) >= 2:
                sub = np.array([self.base.masses[i - 1] for i in c])
                mus.extend(_jacobi_reduced(sub, list(range(len(c)))))
        return np.array(mus)

    @cached_property
    def z_pairs(self) -> list[tuple[int, int]]:
        """Cluster index pairs ``(l, m)``, ``l < m``, enumerating ``z_{bk}``."""
        return list(itertools.combinations(range(self.decomposition.size), 2))

    @cached_property
    def z_matrix(self) -> np.ndarray:
        """Rows giving ``R_m - R_l`` in terms of the base Jacobi vector."""
        Rx = self._com_rows @ self.base.from_jacobi
        return np.array([Rx[m] - Rx[l] for l, m in self.z_pairs]).reshape(len(self.z_pairs), self.base.N - 1)

    @cached_property
    def z_reduced_masses(self) -> np.ndarray:
        M = self.cluster_masses
        return np.array([M[l] * M[m] / (M[l] + M[m]) for l, m in self.z_pairs])

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = _as_config(self.base, x)
        xb = np.einsum("ij,...jk->...ik", self.inter_matrix, x)
        xB = np.einsum("ij,...jk->...ik", self.internal_matrix, x)
        return xb, xB

    def join(self, xb, xB) -> np.ndarray:
        K = np.vstack([self.inter_matrix, self.internal_matrix])
        y = np.concatenate([np.asarray(xb, float), np.asarray(xB, float)], axis=-2)
        return np.einsum("ij,...jk->...ik", np.linalg.inv(K), y)

    def inter_norm2(self, x) -> np.ndarray:
        xb, _ = self.split(x)
        return np.einsum("i,...ik,...ik->...", self.inter_reduced_masses, xb, xb)

    def internal_norm2(self, x) -> np.ndarray:
        _, xB = self.split(x)
        return np.einsum("i,...ik,...ik->...", self.internal_reduced_masses, xB, xB)

    def z_norms2(self, x) -> np.ndarray:
        """Mass-metric squared lengths ``mu_lm |R_m - R_l|^2``, last axis over ``k``."""
        x = _as_config(self.base, x)
        z = np.einsum("kj,...jd->...kd", self.z_matrix, x)
        return self.z_reduced_masses * np.sum(z * z, axis=-1)


def clustered_frame(frame: JacobiFrame, b: ClusterDecomposition) -> ClusteredFrame:
    return ClusteredFrame(frame, b)
