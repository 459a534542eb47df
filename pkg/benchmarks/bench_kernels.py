"""Compare the numba and numpy variants of the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both variants are imported from the same module, so the environment flag does
not matter here.  The first numba call (compilation or cache load) is excluded.
"""
import argparse
import timeit

import numpy as np

from lzcrystal import kernels
from lzcrystal._accel import HAVE_NUMBA


def cases():
    rng = np.random.default_rng(0)

    n_ions = 20
    y = 0.05 * rng.standard_normal(n_ions)
    z = np.linspace(-5, 5, n_ions)
    yield "coulomb_grad_hess (20 ions)", "coulomb_grad_hess", (y, z, 3.0)

    n = 2048
    x = np.linspace(-0.1, 0.1, n)
    dx = x[1] - x[0]
    h = 5.27e-6
    diag = h**2 / dx**2 + 4.54 * x**4 / 4
    psi = np.exp(-(x**2) / (2 * 0.01**2)).astype(complex)
    c2 = np.linspace(0.01, -0.002, 200)
    yield "cn_evolve (2048 points x 200 steps)", "cn_evolve", (psi, diag, 0.5 * x**2, -(h**2) / (2 * dx**2), c2, 1.0, h)

    m = 5000
    w = 2 * np.pi * rng.uniform(0, 2e3, m)
    d = 2 * np.pi * rng.uniform(-3e4, 3e4, m)
    g = rng.uniform(0, 500, m)
    yield "bloch_excitation (5000 detunings)", "bloch_excitation", (w, d, g, 1e-3)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':40s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speed-up':>9s}")
    for label, name, a in cases():
        f_np = getattr(kernels, f"{name}_numpy")
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat))
        if HAVE_NUMBA:
            f_nb = getattr(kernels, f"{name}_numba")
            f_nb(*a)  # compile / load from cache
            t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat))
            print(f"{label:40s} {1e3 * t_np:12.3f} {1e3 * t_nb:12.3f} {t_np / t_nb:8.1f}x")
        else:
            print(f"{label:40s} {1e3 * t_np:12.3f} {'n/a':>12s} {'':>9s}")


if __name__ == "__main__":
    main()
