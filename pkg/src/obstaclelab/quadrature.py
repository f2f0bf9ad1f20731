"""Quadrature on the unit sphere and the unit ball.

Ball nodes are ``rho_j * s_k`` for Gauss-Legendre radii ``rho_j`` in (0, 1) and
the sphere nodes ``s_k``, so every ball node lies on a ray through a sphere
node.  In 2D the sphere rule is the trapezoid rule in angle; in 3D it is
Gauss-Legendre in ``cos(polar angle)`` times the trapezoid rule in azimuth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["Quadrature", "ball_quadrature", "unit_ball_volume", "unit_sphere_area"]


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def unit_sphere_area(n: int) -> float:
    return n * unit_ball_volume(n)


@dataclass(frozen=True, eq=False)
class Quadrature:
    dim: int
    sphere_nodes: np.ndarray   # (Ns, n) unit vectors
    sphere_weights: np.ndarray  # (Ns,)
    radii: np.ndarray          # (Nr,)
    radial_weights: np.ndarray  # (Nr,) Gauss-Legendre on [0, 1], no Jacobian

    @property
    def ball_nodes(self) -> np.ndarray:
        return (self.radii[:, None, None] * self.sphere_nodes[None, :, :]).reshape(-1, self.dim)

    @property
    def ball_weights(self) -> np.ndarray:
        w = (self.radial_weights * self.radii ** (self.dim - 1))[:, None] * self.sphere_weights[None, :]
        return w.reshape(-1)

    @property
    def n_sphere(self) -> int:
        return len(self.sphere_weights)


@lru_cache(maxsize=32)
def ball_quadrature(dim: int = 2, n_theta: int | None = None, n_rho: int = 64) -> Quadrature:
    """Tensor polar rule; ``n_theta`` is the number of angles (azimuths in 3D).

    Defaults: 512 angles in 2D, 64 azimuths x 32 polar nodes in 3D.
    """
    if n_theta is None:
        n_theta = 512 if dim == 2 else 64
    g, gw = np.polynomial.legendre.leggauss(n_rho)
    radii = 0.5 * (g + 1.0)
    rweights = 0.5 * gw
    if dim == 2:
        th = 2.0 * np.pi * np.arange(n_theta) / n_theta
        nodes = np.column_stack([np.cos(th), np.sin(th)])
        weights = np.full(n_theta, 2.0 * np.pi / n_theta)
    elif dim == 3:
        n_pol = max(n_theta // 2, 2)
        c, cw = np.polynomial.legendre.leggauss(n_pol)
        az = 2.0 * np.pi * np.arange(n_theta) / n_theta
        st = np.sqrt(1.0 - c**2)
        nodes = np.stack([np.outer(st, np.cos(az)), np.outer(st, np.sin(az)),
                          np.outer(c, np.ones_like(az))], axis=-1).reshape(-1, 3)
        weights = np.outer(cw, np.full(n_theta, 2.0 * np.pi / n_theta)).reshape(-1)
    else:
        raise ValueError("quadrature implemented for n = 2, 3")
    for arr in (nodes, weights, radii, rweights):
        arr.setflags(write=False)
    return Quadrature(dim, nodes, weights, radii, rweights)
