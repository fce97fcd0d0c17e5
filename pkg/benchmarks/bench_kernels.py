"""Compiled kernels against their numpy fallbacks.

Times lattice interpolation (1-3 d), the non-uniform exponential sum and the
classical orbit integrator with both backends, checks that they agree, and
prints one row per kernel.  Compilation is excluded by a warm-up call.

    python benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]
"""

import argparse
import csv
import sys
import time

import numpy as np

from scatterlab import _accel
from scatterlab.kernels import expsum_numba, expsum_numpy, lattice_interp_numba, lattice_interp_numpy
from scatterlab.potentials import PairPotential
from scatterlab.scattering import OrbitSolver


def best_of(fn, repeat):
    fn()  # warm-up (JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    for dim, n, npts in ((1, 4096, 200_000), (2, 128, 50_000), (3, 32, 10_000)):
        table = rng.normal(size=(n,) * dim) + 1j * rng.normal(size=(n,) * dim)
        origin, step = np.zeros(dim), np.full(dim, 0.1)
        pts = rng.uniform(0.5, 0.1 * n - 0.5, (npts, dim))
        yield (f"lattice_interp {dim}d", lambda t=table, o=origin, s=step, p=pts: lattice_interp_numpy(t, o, s, p),
               lambda t=table, o=origin, s=step, p=pts: lattice_interp_numba(t, o, s, p))
    x = rng.uniform(-10, 10, (2000, 3))
    k = rng.uniform(-2, 2, (500, 3))
    c = rng.normal(size=500) + 1j * rng.normal(size=500)
    yield "expsum 2000x500", lambda: expsum_numpy(x, k, c), lambda: expsum_numba(x, k, c)
    solver = OrbitSolver(PairPotential("soft-coulomb", {"Z": 0.2}, a=1.0), rho=0.25)
    y = rng.uniform(-30, 30, (64, 2))
    xi = rng.uniform(-2, 2, (64, 2))
    yield ("orbits 64 x T=200",
           lambda: solver.integrate(200.0, 0.0, y, xi, backend="numpy")[:2],
           lambda: solver.integrate(200.0, 0.0, y, xi, backend="numba")[:2])


def deviation(a, b):
    if isinstance(a, tuple):
        return max(deviation(u, v) for u, v in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="also write the table to this file")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba unavailable or disabled (SCATTERLAB_NO_NUMBA); nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speed-up':>10}{'max diff':>12}")
    for name, f_np, f_nb in cases(rng):
        t_np, a = best_of(f_np, args.repeat)
        t_nb, b = best_of(f_nb, args.repeat)
        d = deviation(a, b)
        rows.append([name, t_np, t_nb, t_np / t_nb, d])
        print(f"{name:<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{d:>12.1e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "numpy_seconds", "numba_seconds", "speedup", "max_abs_difference"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
