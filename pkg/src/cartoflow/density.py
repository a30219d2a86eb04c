"""Rasterize region densities onto the grid and blur them."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import GridSpec, MapDocument, Region, polygon_area
from .spectral import SpectralPlan


class RasterizationError(ValueError):
    """A region is too small to be resolved by the grid."""

    def __init__(self, region_ids):
        self.region_ids = list(region_ids)
        super().__init__(
            "regions below grid resolution (smaller than one cell): " + ", ".join(self.region_ids)
        )


@dataclass(frozen=True)
class DensityGrid:
    rho0: np.ndarray
    rho_bar: float

    @classmethod
    def from_array(cls, rho0: np.ndarray) -> "DensityGrid":
        rho0 = np.asarray(rho0, dtype=float)
        if np.any(~(rho0 > 0)):
            raise ValueError("density must be strictly positive everywhere")
        return cls(rho0, float(rho0.mean()))

    @property
    def grid(self) -> GridSpec:
        return GridSpec(*self.rho0.shape)


def ring_coverage(points: np.ndarray, lx: int, ly: int) -> np.ndarray:
    """Signed area of the ring's interior inside every unit cell (exact).

    Uses area(P & cell) = -oint clamp(y - j, 0, 1) dx, evaluated edge by edge
    after splitting edges wherever they cross an integer x or y. Vertical
    pieces contribute nothing, so the column strips need no extra edges.
    Counter-clockwise rings give positive coverage, clockwise negative.
    """
    p0 = np.asarray(points, dtype=float)
    p1 = np.roll(p0, -1, axis=0)
    keep = p0[:, 0] != p1[:, 0]
    p0, p1 = p0[keep], p1[keep]
    cov = np.zeros((lx, ly))
    if len(p0) == 0:
        return cov
    x0, y0 = p0[:, 0], p0[:, 1]
    dxe, dye = p1[:, 0] - x0, p1[:, 1] - y0

    def crossings(a0, da):
        lo = np.floor(np.minimum(a0, a0 + da))
        hi = np.floor(np.maximum(a0, a0 + da))
        cnt = (hi - lo).astype(np.int64)
        edge = np.repeat(np.arange(len(a0)), cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        k = lo[edge] + 1 + offs
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (k - a0[edge]) / da[edge]
        return edge, t

    ex, tx = crossings(x0, dxe)
    ey, ty = crossings(y0, dye)
    ne = len(x0)
    edge = np.concatenate([np.arange(ne), np.arange(ne), ex, ey])
    t = np.concatenate([np.zeros(ne), np.ones(ne), tx, ty])
    order = np.lexsort((t, edge))
    edge, t = edge[order], t[order]
    same = edge[1:] == edge[:-1]
    e = edge[:-1][same]
    ta, tb = t[:-1][same], t[1:][same]

    xa = x0[e] + ta * dxe[e]
    xb = x0[e] + tb * dxe[e]
    ym = y0[e] + 0.5 * (ta + tb) * dye[e]
    xm = 0.5 * (xa + xb)
    d = xb - xa
    i = np.clip(np.floor(xm), 0, lx - 1).astype(np.int64)
    k = np.clip(np.floor(ym), 0, ly - 1).astype(np.int64)
    frac = np.clip(ym - k, 0.0, 1.0)
    flat = i * ly + k
    partial = np.bincount(flat, weights=d * frac, minlength=lx * ly).reshape(lx, ly)
    full = np.bincount(flat, weights=d, minlength=lx * ly).reshape(lx, ly)
    # rows strictly below the piece's row see the full width
    above = np.cumsum(full[:, ::-1], axis=1)[:, ::-1]
    below_sum = np.zeros_like(above)
    below_sum[:, :-1] = above[:, 1:]
    cov -= partial + below_sum
    return cov


def region_coverage(region: Region, grid: GridSpec) -> np.ndarray:
    cov = np.zeros(grid.shape)
    for ring in region.rings:
        cov += ring_coverage(ring.points, grid.lx, grid.ly)
    return cov


def rasterize(doc: MapDocument, min_cells: float = 1.0, workers: int = 1) -> DensityGrid:
    """Piecewise-constant density with area-weighted mixing in boundary cells.

    Targets are rescaled so that they sum to the total region area; cells
    outside every region get density 1, which then is also the mean.
    A region with less than ``min_cells`` cells of area raises
    :class:`RasterizationError`.
    """
    if doc.grid is None:
        raise ValueError("map must be normalized to a grid first")
    grid = doc.grid
    areas = np.array([polygon_area(r) for r in doc.regions])
    small = [r.id for r, a in zip(doc.regions, areas) if a < min_cells]
    if small:
        raise RasterizationError(small)
    targets = np.array([r.target for r in doc.regions])
    scaled = targets * areas.sum() / targets.sum()
    dens = scaled / areas

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            covs = list(ex.map(lambda r: region_coverage(r, grid), doc.regions))
    else:
        covs = [region_coverage(r, grid) for r in doc.regions]
    # fixed summation order keeps the result independent of worker count
    rho = np.zeros(grid.shape)
    total = np.zeros(grid.shape)
    for c, d in zip(covs, dens):
        rho += c * d
        total += c
    rho += np.clip(1.0 - total, 0.0, None)
    if np.any(~(rho > 0)):
        bad = np.argwhere(~(rho > 0))[0]
        raise ValueError(f"non-positive density at cell {tuple(bad.tolist())}; overlapping or inverted regions?")
    return DensityGrid(rho, float(rho.mean()))


def blur_factors(lx: int, ly: int, sigma: float) -> np.ndarray:
    m = np.arange(lx)[:, None] / lx
    n = np.arange(ly)[None, :] / ly
    return np.exp(-0.5 * sigma**2 * np.pi**2 * (m**2 + n**2))


def gaussian_blur(density: DensityGrid, sigma: float, plan: SpectralPlan | None = None) -> DensityGrid:
    """Gaussian blur of width ``sigma`` cells with reflecting edges, done in cosine space."""
    if sigma < 0:
        raise ValueError("negative blur width")
    if sigma == 0:
        return density
    lx, ly = density.rho0.shape
    plan = plan or SpectralPlan(lx, ly)
    coeffs = plan.forward_cos_cos(density.rho0) * blur_factors(lx, ly, sigma)
    rho = plan.inverse_cos_cos(coeffs)
    # restore the exact mean; the (0, 0) mode is untouched up to rounding
    rho *= density.rho0.sum() / rho.sum()
    if np.any(~(rho > 0)):
        raise ValueError("blurred density is not strictly positive")
    return DensityGrid(rho, float(rho.mean()))
