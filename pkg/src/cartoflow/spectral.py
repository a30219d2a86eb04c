"""Cosine and mixed sine/cosine transforms on a cell-centered grid.

Grid values live at ``(i + 1/2, j + 1/2)``. The forward transform is

    rho~[m, n] = 4 / ((d_m0 + 1)(d_n0 + 1)) * sum_ij rho[i, j] cos(m pi (i+1/2)/Lx) cos(n pi (j+1/2)/Ly)

and ``inverse_cos_cos`` carries a ``1/(Lx Ly)`` prefactor so the pair is an
exact round trip (DCT-II / DCT-III). The mixed syntheses have no prefactor;
callers fold all scaling into ``weights``.
"""

from __future__ import annotations

import numpy as np
from scipy import fft


class SpectralPlan:
    """Precomputed normalization for one grid shape, with a transform counter.

    ``transforms_executed`` counts every forward or inverse transform run
    through the plan; the flow solver relies on it to show that no
    transforms happen during integration.
    """

    def __init__(self, lx: int, ly: int, workers: int = 1):
        self.lx, self.ly = int(lx), int(ly)
        self.workers = max(1, int(workers))
        self.transforms_executed = 0
        dm = np.ones(self.lx)
        dm[0] = 2.0
        dn = np.ones(self.ly)
        dn[0] = 2.0
        self._delta = np.outer(dm, dn)

    def _check(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape != (self.lx, self.ly):
            raise ValueError(f"expected shape {(self.lx, self.ly)}, got {a.shape}")
        return a

    def forward_cos_cos(self, grid: np.ndarray) -> np.ndarray:
        grid = self._check(grid)
        self.transforms_executed += 1
        # unnormalized DCT-II already contributes a factor 2 per axis
        return fft.dctn(grid, type=2, workers=self.workers) / self._delta

    def inverse_cos_cos(self, coeffs: np.ndarray) -> np.ndarray:
        c = self._check(coeffs)
        self.transforms_executed += 1
        # DCT-III computes b0 + 2 sum_k b_k cos(..) per axis
        b = c / (4.0 / self._delta)
        return fft.dctn(b, type=3, workers=self.workers) / (self.lx * self.ly)

    def inverse_sin_cos(self, coeffs: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
        """``sum_{m>=1, n>=0} w c sin(m pi x/Lx) cos(n pi y/Ly)`` at cell centers."""
        c = self._check(coeffs)
        if weights is not None:
            c = c * weights
        self.transforms_executed += 1
        a = _shift_for_dst(c, axis=0)
        a[:, 1:] *= 0.5
        a = fft.dst(a, type=3, axis=0, workers=self.workers)
        return fft.dct(a, type=3, axis=1, workers=self.workers)

    def inverse_cos_sin(self, coeffs: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
        """``sum_{m>=0, n>=1} w c cos(m pi x/Lx) sin(n pi y/Ly)`` at cell centers."""
        c = self._check(coeffs)
        if weights is not None:
            c = c * weights
        self.transforms_executed += 1
        a = _shift_for_dst(c, axis=1)
        a[1:, :] *= 0.5
        a = fft.dst(a, type=3, axis=1, workers=self.workers)
        return fft.dct(a, type=3, axis=0, workers=self.workers)


def _shift_for_dst(c: np.ndarray, axis: int) -> np.ndarray:
    # DST-III input k holds mode k+1 (halved); mode N is never present
    c = np.moveaxis(c, axis, 0)
    a = np.zeros_like(c)
    a[:-1] = 0.5 * c[1:]
    return np.moveaxis(a, 0, axis)


def forward_cos_cos(grid, plan: SpectralPlan | None = None):
    plan = plan or SpectralPlan(*np.shape(grid))
    return plan.forward_cos_cos(grid)


def inverse_cos_cos(coeffs, plan: SpectralPlan | None = None):
    plan = plan or SpectralPlan(*np.shape(coeffs))
    return plan.inverse_cos_cos(coeffs)


def inverse_sin_cos(coeffs, weights=None, plan: SpectralPlan | None = None):
    plan = plan or SpectralPlan(*np.shape(coeffs))
    return plan.inverse_sin_cos(coeffs, weights)


def inverse_cos_sin(coeffs, weights=None, plan: SpectralPlan | None = None):
    plan = plan or SpectralPlan(*np.shape(coeffs))
    return plan.inverse_cos_sin(coeffs, weights)


# -- direct-summation references (O(L^4)); used as test oracles -------------------


def _basis(kind, modes: int, points: int) -> np.ndarray:
    m = np.arange(modes)[:, None]
    x = np.arange(points)[None, :] + 0.5
    f = np.cos if kind == "cos" else np.sin
    return f(m * np.pi * x / points)


def naive_forward_cos_cos(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    lx, ly = grid.shape
    out = np.empty((lx, ly))
    xs = np.arange(lx) + 0.5
    ys = np.arange(ly) + 0.5
    for m in range(lx):
        cx = np.cos(m * np.pi * xs / lx)
        for n in range(ly):
            cy = np.cos(n * np.pi * ys / ly)
            s = 0.0
            for i in range(lx):
                s += cx[i] * float(np.dot(grid[i], cy))
            out[m, n] = 4.0 / ((1 + (m == 0)) * (1 + (n == 0))) * s
    return out


def _naive_synthesis(coeffs, kind_x, kind_y, prefactor=1.0):
    c = np.asarray(coeffs, dtype=float)
    lx, ly = c.shape
    bx = _basis(kind_x, lx, lx)  # [m, i]
    by = _basis(kind_y, ly, ly)  # [n, j]
    out = np.zeros((lx, ly))
    for i in range(lx):
        for j in range(ly):
            s = 0.0
            for m in range(lx):
                s += bx[m, i] * float(np.dot(c[m], by[:, j]))
            out[i, j] = prefactor * s
    return out


def naive_inverse_cos_cos(coeffs: np.ndarray) -> np.ndarray:
    lx, ly = np.shape(coeffs)
    return _naive_synthesis(coeffs, "cos", "cos", 1.0 / (lx * ly))


def naive_inverse_sin_cos(coeffs: np.ndarray, weights=None) -> np.ndarray:
    c = np.array(coeffs, dtype=float)
    if weights is not None:
        c = c * weights
    c[0, :] = 0.0
    return _naive_synthesis(c, "sin", "cos")


def naive_inverse_cos_sin(coeffs: np.ndarray, weights=None) -> np.ndarray:
    c = np.array(coeffs, dtype=float)
    if weights is not None:
        c = c * weights
    c[:, 0] = 0.0
    return _naive_synthesis(c, "cos", "sin")
