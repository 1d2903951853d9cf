"""Time the Wigner kernel: compiled extension against the numpy fallback.

Run from the repository root after building the extension::

    python3 benchmarks/bench_kernels.py --n-max 30 --grid 101
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from trslab import _wigner_py

try:
    from trslab import _wigner_ext
except ImportError:
    _wigner_ext = None


def random_density(n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def grid(points: int, extent: float = 3.0) -> np.ndarray:
    x = np.linspace(-extent, extent, points)
    X, P = np.meshgrid(x, x)
    return (X + 1j * P) / np.sqrt(2)


def best_time(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-max", type=int, nargs="+", default=[10, 20, 30])
    ap.add_argument("--grid", type=int, default=81)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    alpha = grid(args.grid)
    print(f"grid {args.grid}x{args.grid}, best of {args.repeat}")
    print(f"{'n_max':>6} {'numpy [s]':>10} {'cython [s]':>11} {'speedup':>8} {'max diff':>9}")
    for n in args.n_max:
        rho = random_density(n)
        t_py = best_time(lambda: _wigner_py.wigner_grid(rho, alpha), args.repeat)
        if _wigner_ext is None:
            print(f"{n:>6} {t_py:>10.4f} {'n/a':>11}")
            continue
        t_cy = best_time(lambda: _wigner_ext.wigner_grid(rho, alpha), args.repeat)
        diff = np.max(np.abs(_wigner_py.wigner_grid(rho, alpha) - _wigner_ext.wigner_grid(rho, alpha)))
        print(f"{n:>6} {t_py:>10.4f} {t_cy:>11.4f} {t_py / t_cy:>8.1f} {diff:>9.1e}")


if __name__ == "__main__":
    main()
