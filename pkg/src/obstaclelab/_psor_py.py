"""Pure-Python projected SOR sweep; same arithmetic order as the compiled one."""


def psor_sweep(u, stencil, f, omega):
    """One lexicographic projected SOR sweep over the interior nodes, in place.

    See the compiled twin ``_psor.psor_sweep`` for the conventions.
    """
    nx, ny = u.shape
    uu = u.tolist()
    ss = stencil.tolist()
    ff = f.tolist()
    maxchg = 0.0
    de = 0.0
    for i in range(1, nx - 1):
        um, u0, up = uu[i - 1], uu[i], uu[i + 1]
        srow = ss[i]
        frow = ff[i]
        for j in range(1, ny - 1):
            s = srow[j]
            g = s[0] * um[j - 1]
            g = g + s[1] * um[j]
            g = g + s[2] * um[j + 1]
            g = g + s[3] * u0[j - 1]
            g = g + s[4] * u0[j]
            g = g + s[5] * u0[j + 1]
            g = g + s[6] * up[j - 1]
            g = g + s[7] * up[j]
            g = g + s[8] * up[j + 1]
            g = g + frow[j]
            d = s[4]
            old = u0[j]
            t = -omega * g / d
            new = old + t
            if new < 0.0:
                new = 0.0
            t = new - old
            u0[j] = new
            de = de + (d * t * t + 2.0 * t * g)
            if abs(t) > maxchg:
                maxchg = abs(t)
    u[...] = uu
    return maxchg, de
