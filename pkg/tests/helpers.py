"""Shared, cached benchmark solves for the test suite."""

from functools import lru_cache

import numpy as np

from obstaclelab.geometry import free_boundary
from obstaclelab.problems import make_benchmark
from obstaclelab.solver import solve_obstacle


@lru_cache(maxsize=None)
def solved(name: str, n: int):
    """``(benchmark, solution)`` on the benchmark box with ``h = 1/n``."""
    b = make_benchmark(name)
    return b, solve_obstacle(b.grid(1.0 / n), b.field, b.boundary)


@lru_cache(maxsize=None)
def interface(name: str, n: int):
    return free_boundary(solved(name, n)[1])


def far_points(name: str, n: int, dist: float):
    """Free-boundary points at least ``dist`` from the domain boundary."""
    _, sol = solved(name, n)
    fb = interface(name, n)
    keep = sol.grid.distance_to_boundary(fb.points) >= dist
    return fb.points[keep]


def halfspace_u(x):
    return 0.5 * np.maximum(np.asarray(x)[..., 0], 0.0) ** 2


def halfspace_grad(x):
    x = np.asarray(x)
    return np.eye(x.shape[-1])[0] * np.maximum(x[..., :1], 0.0)


def quad_form(Q):
    Q = np.asarray(Q, dtype=float)
    return (lambda x: np.einsum("...i,ij,...j->...", x, Q, x)), (lambda x: 2.0 * np.asarray(x) @ Q)
