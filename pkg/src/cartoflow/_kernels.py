"""Compiled per-point kernels for the integrators."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def velocity_kernel(jx, jy, rho, xs, ys, pts, a, b, floor, out):
    """Bilinear J and rho at every point, then ``v = J / (a * rho + b)``.

    ``jx``, ``jy`` and ``rho`` are padded to ``(lx + 2, ly + 2)`` nodes at
    ``xs`` x ``ys``. Returns the number of points where the density had to be
    raised to ``floor``.
    """
    lx = xs.shape[0] - 2
    ly = ys.shape[0] - 2
    clipped = 0
    for p in range(pts.shape[0]):
        x = pts[p, 0]
        y = pts[p, 1]
        i = int(np.floor(x + 0.5))
        j = int(np.floor(y + 0.5))
        if i < 0:
            i = 0
        elif i > lx:
            i = lx
        if j < 0:
            j = 0
        elif j > ly:
            j = ly
        fx = (x - xs[i]) / (xs[i + 1] - xs[i])
        fy = (y - ys[j]) / (ys[j + 1] - ys[j])
        fx = min(max(fx, 0.0), 1.0)
        fy = min(max(fy, 0.0), 1.0)
        w00 = (1.0 - fx) * (1.0 - fy)
        w10 = fx * (1.0 - fy)
        w01 = (1.0 - fx) * fy
        w11 = fx * fy
        vx = w00 * jx[i, j] + w10 * jx[i + 1, j] + w01 * jx[i, j + 1] + w11 * jx[i + 1, j + 1]
        vy = w00 * jy[i, j] + w10 * jy[i + 1, j] + w01 * jy[i, j + 1] + w11 * jy[i + 1, j + 1]
        r = w00 * rho[i, j] + w10 * rho[i + 1, j] + w01 * rho[i, j + 1] + w11 * rho[i + 1, j + 1]
        r = a * r + b
        if r < floor:
            r = floor
            clipped += 1
        out[p, 0] = vx / r
        out[p, 1] = vy / r
    return clipped


_warm = False


def warm_up():
    """Trigger compilation (or cache load) outside any timed region."""
    global _warm
    if _warm:
        return
    z = np.zeros((3, 3))
    nodes = np.array([0.0, 0.5, 1.0])
    out = np.empty((1, 2))
    velocity_kernel(z, z, z + 1.0, nodes, nodes, np.full((1, 2), 0.5), 1.0, 0.0, 0.0, out)
    _warm = True
