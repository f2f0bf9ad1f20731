# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled projected SOR sweep (2D, 9-point stencil)."""

from libc.math cimport fabs


def psor_sweep(double[:, ::1] u, double[:, :, ::1] stencil, double[:, ::1] f,
               double omega):
    """One lexicographic projected SOR sweep over the interior nodes, in place.

    ``stencil[i, j, 3*a + b]`` multiplies ``u[i+a-1, j+b-1]`` in ``(M u)[i, j]``.
    Returns ``(max |update|, sum of energy changes)``; the energy change is in
    units of ``h**2`` (multiply by ``h**2`` for the discrete energy).
    """
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1]
    cdef Py_ssize_t i, j
    cdef double g, d, t, new, old
    cdef double maxchg = 0.0, de = 0.0
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            g = stencil[i, j, 0] * u[i - 1, j - 1]
            g = g + stencil[i, j, 1] * u[i - 1, j]
            g = g + stencil[i, j, 2] * u[i - 1, j + 1]
            g = g + stencil[i, j, 3] * u[i, j - 1]
            g = g + stencil[i, j, 4] * u[i, j]
            g = g + stencil[i, j, 5] * u[i, j + 1]
            g = g + stencil[i, j, 6] * u[i + 1, j - 1]
            g = g + stencil[i, j, 7] * u[i + 1, j]
            g = g + stencil[i, j, 8] * u[i + 1, j + 1]
            g = g + f[i, j]
            d = stencil[i, j, 4]
            old = u[i, j]
            t = -omega * g / d
            new = old + t
            if new < 0.0:
                new = 0.0
            t = new - old
            u[i, j] = new
            de = de + (d * t * t + 2.0 * t * g)
            if fabs(t) > maxchg:
                maxchg = fabs(t)
    return maxchg, de
