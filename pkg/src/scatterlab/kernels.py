"""Hot loops, each with a numba kernel and a vectorised numpy twin.

The public functions dispatch on :data:`scatterlab._accel.HAVE_NUMBA`; the
``*_numpy`` variants are always importable so the benchmark and tests can
compare both paths in one process.
"""

from __future__ import annotations

import numpy as np

from scatterlab._accel import HAVE_NUMBA, njit, prange

STENCIL = 8  # Lagrange interpolation order (points per axis)
_OFFSETS = np.arange(-STENCIL // 2 + 1, STENCIL // 2 + 1)  # -3..4


# ----------------------------------------------------------------------------
# Lagrange weights
# ----------------------------------------------------------------------------

def lagrange_weights_numpy(u: np.ndarray) -> np.ndarray:
    """Weights of the 8-point Lagrange stencil at fractional offsets ``u``.

    Nodes sit at ``-3..4`` relative to ``floor``; ``u`` in ``[0, 1)``.
    Returns an array of shape ``u.shape + (8,)``.
    """
    u = np.asarray(u, dtype=float)
    k = _OFFSETS.astype(float)
    w = np.empty(u.shape + (STENCIL,))
    for i in range(STENCIL):
        acc = np.ones(u.shape)
        for j in range(STENCIL):
            if j != i:
                acc = acc * (u - k[j]) / (k[i] - k[j])
        w[..., i] = acc
    return w


@njit
def _lagrange_weights_nb(u, out):
    for i in range(8):
        acc = 1.0
        ki = i - 3.0
        for j in range(8):
            if j != i:
                kj = j - 3.0
                acc *= (u - kj) / (ki - kj)
        out[i] = acc


# ----------------------------------------------------------------------------
# interpolation on a uniform complex lattice
# ----------------------------------------------------------------------------

@njit
def _interp1_nb(table, origin, step, pts, out):
    n0 = table.shape[0]
    w0 = np.empty(8)
    for p in range(pts.shape[0]):
        s0 = (pts[p, 0] - origin[0]) / step[0]
        f0 = int(np.floor(s0))
        _lagrange_weights_nb(s0 - f0, w0)
        acc = 0.0 + 0.0j
        for a in range(8):
            i0 = f0 - 3 + a
            if 0 <= i0 < n0:
                acc += w0[a] * table[i0]
        out[p] = acc


@njit
def _interp2_nb(table, origin, step, pts, out):
    n0, n1 = table.shape
    w0 = np.empty(8)
    w1 = np.empty(8)
    for p in range(pts.shape[0]):
        s0 = (pts[p, 0] - origin[0]) / step[0]
        s1 = (pts[p, 1] - origin[1]) / step[1]
        f0 = int(np.floor(s0))
        f1 = int(np.floor(s1))
        _lagrange_weights_nb(s0 - f0, w0)
        _lagrange_weights_nb(s1 - f1, w1)
        acc = 0.0 + 0.0j
        for a in range(8):
            i0 = f0 - 3 + a
            if i0 < 0 or i0 >= n0:
                continue
            row = 0.0 + 0.0j
            for b in range(8):
                i1 = f1 - 3 + b
                if 0 <= i1 < n1:
                    row += w1[b] * table[i0, i1]
            acc += w0[a] * row
        out[p] = acc


@njit
def _interp3_nb(table, origin, step, pts, out):
    n0, n1, n2 = table.shape
    w0 = np.empty(8)
    w1 = np.empty(8)
    w2 = np.empty(8)
    for p in range(pts.shape[0]):
        s0 = (pts[p, 0] - origin[0]) / step[0]
        s1 = (pts[p, 1] - origin[1]) / step[1]
        s2 = (pts[p, 2] - origin[2]) / step[2]
        f0 = int(np.floor(s0))
        f1 = int(np.floor(s1))
        f2 = int(np.floor(s2))
        _lagrange_weights_nb(s0 - f0, w0)
        _lagrange_weights_nb(s1 - f1, w1)
        _lagrange_weights_nb(s2 - f2, w2)
        acc = 0.0 + 0.0j
        for a in range(8):
            i0 = f0 - 3 + a
            if i0 < 0 or i0 >= n0:
                continue
            plane = 0.0 + 0.0j
            for b in range(8):
                i1 = f1 - 3 + b
                if i1 < 0 or i1 >= n1:
                    continue
                row = 0.0 + 0.0j
                for c in range(8):
                    i2 = f2 - 3 + c
                    if 0 <= i2 < n2:
                        row += w2[c] * table[i0, i1, i2]
                plane += w1[b] * row
            acc += w0[a] * plane
        out[p] = acc


def lattice_interp_numpy(table, origin, step, pts, chunk: int = 4096) -> np.ndarray:
    """Separable 8-point Lagrange interpolation of ``table`` at ``pts``.

    Lattice node ``i`` sits at ``origin + i * step`` per axis; nodes outside
    the table count as zero.
    """
    table = np.asarray(table)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    m = table.ndim
    out = np.empty(len(pts), dtype=complex)
    padded = np.pad(table, [(STENCIL, STENCIL)] * m)
    for start in range(0, len(pts), chunk):
        P = pts[start:start + chunk]
        s = (P - origin) / step
        f = np.floor(s).astype(np.int64)
        w = lagrange_weights_numpy(s - f)  # (n, m, 8)
        idx = f[:, :, None] + _OFFSETS[None, None, :] + STENCIL  # (n, m, 8)
        idx = np.clip(idx, 0, np.array(padded.shape)[None, :, None] - 1)
        if m == 1:
            vals = padded[idx[:, 0]]
            out[start:start + len(P)] = np.einsum("na,na->n", w[:, 0], vals)
        elif m == 2:
            vals = padded[idx[:, 0][:, :, None], idx[:, 1][:, None, :]]
            out[start:start + len(P)] = np.einsum("na,nb,nab->n", w[:, 0], w[:, 1], vals)
        else:
            vals = padded[idx[:, 0][:, :, None, None], idx[:, 1][:, None, :, None], idx[:, 2][:, None, None, :]]
            out[start:start + len(P)] = np.einsum("na,nb,nc,nabc->n", w[:, 0], w[:, 1], w[:, 2], vals)
    return out


def lattice_interp_numba(table, origin, step, pts) -> np.ndarray:
    table = np.ascontiguousarray(table, dtype=complex)
    pts = np.ascontiguousarray(np.atleast_2d(pts), dtype=float)
    origin = np.ascontiguousarray(origin, dtype=float)
    step = np.ascontiguousarray(step, dtype=float)
    out = np.empty(len(pts), dtype=complex)
    fn = {1: _interp1_nb, 2: _interp2_nb, 3: _interp3_nb}[table.ndim]
    fn(table, origin, step, pts, out)
    return out


def lattice_interp(table, origin, step, pts) -> np.ndarray:
    if HAVE_NUMBA:
        return lattice_interp_numba(table, origin, step, pts)
    return lattice_interp_numpy(table, origin, step, pts)


# ----------------------------------------------------------------------------
# non-uniform exponential sums  out_p = sum_q c_q exp(i x_p . k_q)
# ----------------------------------------------------------------------------

@njit
def _expsum_nb(x, k, c, out):
    P, m = x.shape
    Q = k.shape[0]
    for p in range(P):
        acc = 0.0 + 0.0j
        for q in range(Q):
            ph = 0.0
            for a in range(m):
                ph += x[p, a] * k[q, a]
            acc += c[q] * (np.cos(ph) + 1j * np.sin(ph))
        out[p] = acc


def expsum_numpy(x, k, c, chunk: int = 256) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = np.atleast_2d(np.asarray(k, dtype=float))
    c = np.asarray(c, dtype=complex)
    out = np.empty(len(x), dtype=complex)
    for s in range(0, len(x), chunk):
        out[s:s + chunk] = np.exp(1j * (x[s:s + chunk] @ k.T)) @ c
    return out


def expsum_numba(x, k, c) -> np.ndarray:
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=float)
    k = np.ascontiguousarray(np.atleast_2d(k), dtype=float)
    c = np.ascontiguousarray(c, dtype=complex)
    out = np.empty(len(x), dtype=complex)
    _expsum_nb(x, k, c, out)
    return out


def expsum(x, k, c) -> np.ndarray:
    """``sum_q c_q exp(i x_p . k_q)`` for every row ``x_p``."""
    if HAVE_NUMBA:
        return expsum_numba(x, k, c)
    return expsum_numpy(x, k, c)


# ----------------------------------------------------------------------------
# classical orbits of the cut-off long-range dynamics
# ----------------------------------------------------------------------------

# radial kinds understood by the compiled orbit kernel
ORBIT_KINDS = {"zero": 0, "soft-coulomb": 1, "inverse-power": 2, "gaussian": 3, "yukawa": 4,
               "screened-coulomb": 5}


@njit(cache=True)
def _radial_nb(code, prm, r):
    """``(V(r), V'(r))`` for the built-in radial kinds."""
    if code == 0:
        return 0.0, 0.0
    if code == 3:
        w = prm[1]
        v = prm[0] * np.exp(-(r / w) ** 2)
        return v, -2.0 * r / (w * w) * v
    s = np.sqrt(r * r + prm[3] * prm[3])
    if code == 1:
        return prm[0] / s, -prm[0] * r / s**3
    if code == 2:
        n = prm[1]
        return prm[0] / s**n, -n * prm[0] * r / s ** (n + 2.0)
    e = prm[0] * np.exp(-prm[1] * r)
    return e / s, e * (-prm[1] / s - r / s**3)


@njit(cache=True)
def _step_nb(u):
    if u <= 0.0:
        return 0.0, 0.0
    if u >= 1.0:
        return 1.0, 0.0
    f0 = np.exp(-1.0 / u)
    f1 = np.exp(-1.0 / (1.0 - u))
    d = f0 + f1
    return f0 / d, f0 * f1 * (1.0 / (u * u) + 1.0 / ((1.0 - u) * (1.0 - u))) / (d * d)


@njit(cache=True)
def _vrho_nb(code, prm, rho, t, x, grad):
    """``V_rho(t, x)``; writes the gradient into ``grad``."""
    m = x.shape[0]
    r2 = 0.0
    for a in range(m):
        r2 += x[a] * x[a]
    r = np.sqrt(r2)
    jt = np.sqrt(1.0 + t * t)
    lt = np.log(jt)
    lam = np.sqrt(1.0 + lt * lt) / jt
    ca, da = _step_nb(rho * r - 1.0)
    cb, db = _step_nb(lam * r - 1.0)
    v, dv = _radial_nb(code, prm, r)
    c = ca * cb
    dc = rho * da * cb + ca * lam * db
    g = dv * c + v * dc
    for a in range(m):
        grad[a] = g * x[a] / r if r > 0.0 else 0.0
    return v * c


@njit(cache=True)
def _orbit_one(code, prm, rho, edges, y, xi, tol, max_iter, max_split, xg, wg, S, C, qo, po):
    n = xg.shape[0]
    m = y.shape[0]
    q = y.copy()
    p = xi.copy()
    A = 0.0
    Q = np.empty((n, m))
    P = np.empty((n, m))
    G = np.empty((n, m))
    Pn = np.empty((n, m))
    Qn = np.empty((n, m))
    Vn = np.empty(n)
    g = np.empty(m)
    sa = np.empty(2 * max_split + 4)
    sb = np.empty(2 * max_split + 4)
    sd = np.empty(2 * max_split + 4, dtype=np.int64)
    for e in range(edges.shape[0] - 1):
        top = 0
        sa[0] = edges[e]
        sb[0] = edges[e + 1]
        sd[0] = 0
        top = 1
        while top > 0:
            top -= 1
            a = sa[top]
            b = sb[top]
            depth = sd[top]
            h = 0.5 * (b - a)
            qmax = 0.0
            pm0 = 0.0
            for j in range(n):
                tj = a + h * (1.0 + xg[j])
                for k in range(m):
                    Q[j, k] = q[k] + (tj - a) * p[k]
                    P[j, k] = p[k]
                    qmax = max(qmax, abs(Q[j, k]))
            for k in range(m):
                pm0 = max(pm0, abs(p[k]))
            scale = 1.0 + qmax + pm0
            conv = False
            prev = np.inf
            for it in range(max_iter):
                for j in range(n):
                    _vrho_nb(code, prm, rho, a + h * (1.0 + xg[j]), Q[j], g)
                    for k in range(m):
                        G[j, k] = g[k]
                inc = 0.0
                for i in range(n):
                    for k in range(m):
                        acc = 0.0
                        for j in range(n):
                            acc += S[i, j] * G[j, k]
                        Pn[i, k] = p[k] - h * acc
                for i in range(n):
                    for k in range(m):
                        acc = 0.0
                        for j in range(n):
                            acc += S[i, j] * Pn[j, k]
                        Qn[i, k] = q[k] + h * acc
                        inc = max(inc, abs(Qn[i, k] - Q[i, k]), abs(Pn[i, k] - P[i, k]))
                for i in range(n):
                    for k in range(m):
                        Q[i, k] = Qn[i, k]
                        P[i, k] = Pn[i, k]
                if inc <= tol * scale:
                    conv = True
                    break
                if not np.isfinite(inc) or (it > 20 and inc > 0.9 * prev):
                    break
                prev = inc
            pmax = 0.0
            for j in range(n):
                Vn[j] = _vrho_nb(code, prm, rho, a + h * (1.0 + xg[j]), Q[j], g)
                for k in range(m):
                    G[j, k] = g[k]
                    pmax = max(pmax, abs(P[j, k]))
            ok = conv
            if ok:
                tail = 0.0
                for r in range(n - 2, n):
                    for k in range(m):
                        acc = 0.0
                        for j in range(n):
                            acc += C[r, j] * G[j, k]
                        tail = max(tail, abs(h) * abs(acc))
                ok = tail <= 10.0 * tol * (1.0 + pmax)
            if not ok:
                if depth >= max_split:
                    return False, A
                mid = 0.5 * (a + b)
                sa[top] = mid
                sb[top] = b
                sd[top] = depth + 1
                sa[top + 1] = a
                sb[top + 1] = mid
                sd[top + 1] = depth + 1
                top += 2
                continue
            for k in range(m):
                dq = 0.0
                dp = 0.0
                for j in range(n):
                    dq += wg[j] * P[j, k]
                    dp += wg[j] * G[j, k]
                q[k] += h * dq
                p[k] -= h * dp
            for j in range(n):
                kin = 0.0
                for k in range(m):
                    kin += P[j, k] * P[j, k]
                A += h * wg[j] * (0.5 * kin - Vn[j])
    for k in range(m):
        qo[k] = q[k]
        po[k] = p[k]
    return True, A


@njit(cache=True, parallel=True)
def orbit_batch_numba(code, prm, rho, edges, y, xi, tol, max_iter, max_split, xg, wg, S, C):
    """Integrate every row of ``(y, xi)`` across the panels ``edges``.

    Returns ``(q, p, action, ok)``; ``ok[b]`` is False where a panel could
    not be resolved within ``max_split`` bisections.
    """
    B, m = y.shape
    q = np.empty((B, m))
    p = np.empty((B, m))
    A = np.empty(B)
    ok = np.empty(B, dtype=np.bool_)
    for b in prange(B):
        ok[b], A[b] = _orbit_one(code, prm, rho, edges, y[b], xi[b], tol, max_iter, max_split,
                                 xg, wg, S, C, q[b], p[b])
    return q, p, A, ok
