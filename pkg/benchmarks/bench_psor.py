"""Time one projected SOR sweep with the compiled and the pure-Python kernel.

    python3 benchmarks/bench_psor.py [--n 129] [--repeat 5]
"""

import argparse
import time

import numpy as np

from obstaclelab import _psor_py, make_test_family
from obstaclelab.grid import Grid
from obstaclelab.solver import DiscreteOperator

try:
    from obstaclelab import _psor
except ImportError:
    _psor = None


def setup(n):
    grid = Grid.from_bounds(((-1.0, 1.0), (-1.0, 1.0)), 2.0 / (n - 1))
    field = make_test_family("rotating", bounds=grid.bounds)
    op = DiscreteOperator(grid, field.A(grid.points()))
    f = np.ascontiguousarray(np.ones(grid.shape) * grid.h**2)
    return op.flat_stencil, f, grid.shape


def bench(sweep, stencil, f, shape, repeat):
    best = np.inf
    u = np.zeros(shape)
    for _ in range(repeat):
        t = time.perf_counter()
        sweep(u, stencil, f, 1.5)
        best = min(best, time.perf_counter() - t)
    return best, u


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=129, help="nodes per axis")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    stencil, f, shape = setup(args.n)
    t_py, u_py = bench(_psor_py.psor_sweep, stencil, f, shape, args.repeat)
    print(f"python  {t_py * 1e3:9.2f} ms/sweep")
    if _psor is None:
        print("cython  not built")
        return
    t_cy, u_cy = bench(_psor.psor_sweep, stencil, f, shape, args.repeat)
    print(f"cython  {t_cy * 1e3:9.2f} ms/sweep  (speedup {t_py / t_cy:.0f}x)")
    print(f"max |u_py - u_cy| after {args.repeat} sweeps: {np.max(np.abs(u_py - u_cy)):.3g}")


if __name__ == "__main__":
    main()
