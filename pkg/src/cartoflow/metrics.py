"""Distortion measures for a projection and for pairs of polygons.

Local measures come from the Tissot indicatrix of the map (singular values of
its Jacobian); polygon-level measures are the mean aspect ratio, the total
Hamming distance and the relative position error.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, QhullError

from .density import ring_coverage
from .geometry import GeometryError, MapDocument, Region, Ring, centroid, signed_area
from .projection import ProjectionMap

log = logging.getLogger(__name__)

HAMMING_RESOLUTION = 512
COARSE_RESOLUTION = 128


@dataclass(frozen=True)
class TissotSample:
    location: tuple[float, float]
    a: float
    b: float


def _axes(jac: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Singular values of a stack of 2x2 matrices, larger first."""
    s = np.linalg.svd(jac, compute_uv=False)
    return s[..., 0], s[..., 1]


def tissot_axes(T: ProjectionMap, p) -> tuple[float, float]:
    """Semi-axes ``(a, b)`` of the indicatrix at ``p``, central differences with h = 1."""
    x, y = map(float, p)
    g = T.grid
    if not (1 <= x <= g.lx - 1 and 1 <= y <= g.ly - 1):
        raise ValueError(f"point {(x, y)} too close to the box edge for central differences")
    q = T.apply(np.array([[x + 1, y], [x - 1, y], [x, y + 1], [x, y - 1]]))
    jac = np.column_stack([(q[0] - q[1]) / 2.0, (q[2] - q[3]) / 2.0])
    a, b = _axes(jac)
    return float(a), float(b)


def jacobian_field(T: ProjectionMap) -> np.ndarray:
    """Jacobian at every cell center, shape ``(lx, ly, 2, 2)``.

    Central differences at unit spacing in the interior, one-sided on the
    outermost ring of cells.
    """
    g = T.grid
    centers = T.apply(g.cell_centers()).reshape(g.lx, g.ly, 2)
    dx = np.gradient(centers, axis=0)
    dy = np.gradient(centers, axis=1)
    return np.stack([dx, dy], axis=-1)


def distortion_fields(T: ProjectionMap) -> tuple[np.ndarray, np.ndarray]:
    """``e = ln(a/b)`` and ``etilde = 2 arcsin((a-b)/(a+b))`` on the cell centers.

    A collapsed cell (``b = 0``) has ``e = inf``.
    """
    a, b = _axes(jacobian_field(T))
    with np.errstate(divide="ignore"):
        e = np.where(b > 0, np.log(a / np.where(b > 0, b, 1.0)), np.inf)
        ratio = np.where(a + b > 0, (a - b) / np.where(a + b > 0, a + b, 1.0), 0.0)
    et = 2.0 * np.arcsin(np.clip(ratio, -1.0, 1.0))
    return e, et


def aggregate(field: np.ndarray) -> tuple[float, float]:
    """Mean and maximum of a per-cell field (cells have unit area)."""
    field = np.asarray(field, dtype=float)
    return float(field.mean()), float(field.max())


def _interior(field: np.ndarray) -> np.ndarray:
    if min(field.shape) > 2:
        return field[1:-1, 1:-1]
    return field


def _points(poly) -> np.ndarray:
    if isinstance(poly, Region):
        return poly.all_points()
    if isinstance(poly, Ring):
        return poly.points
    return np.asarray(poly, dtype=float).reshape(-1, 2)


def min_area_rectangle(points) -> tuple[float, float, float]:
    """Minimum-area bounding rectangle: ``(longer side, shorter side, angle)``.

    The optimum has one side along a convex-hull edge, so only hull edge
    directions are tried.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    try:
        hull = pts[ConvexHull(pts).vertices]
    except (QhullError, ValueError) as exc:
        raise GeometryError("degenerate polygon: no two-dimensional hull") from exc
    edges = np.roll(hull, -1, axis=0) - hull
    angles = np.arctan2(edges[:, 1], edges[:, 0]) % (np.pi / 2)
    c, s = np.cos(angles), np.sin(angles)
    # hull coordinates in each edge-aligned frame
    u = hull[:, 0][None, :] * c[:, None] + hull[:, 1][None, :] * s[:, None]
    v = -hull[:, 0][None, :] * s[:, None] + hull[:, 1][None, :] * c[:, None]
    w = u.max(axis=1) - u.min(axis=1)
    h = v.max(axis=1) - v.min(axis=1)
    k = int(np.argmin(w * h))
    return max(w[k], h[k]), min(w[k], h[k]), float(angles[k])


def aspect_ratio(poly) -> float:
    """Longer over shorter side of the minimum-area bounding rectangle (>= 1)."""
    longer, shorter, _ = min_area_rectangle(_points(poly))
    if shorter <= 0:
        raise GeometryError("degenerate polygon: zero-width bounding rectangle")
    return float(longer / shorter)


def _rings_of(poly) -> list[np.ndarray]:
    if isinstance(poly, Region):
        return [r.points for r in poly.rings]
    if isinstance(poly, Ring):
        return [poly.points]
    try:
        arr = np.asarray(poly, dtype=float)
    except ValueError:
        arr = None
    if arr is not None and arr.ndim == 2:
        return [arr]
    # a sequence of rings
    return [np.asarray(r, dtype=float) for r in poly]


def _area(rings: Sequence[np.ndarray]) -> float:
    return abs(sum(signed_area(r) for r in rings))


def _centroid(rings: Sequence[np.ndarray]) -> np.ndarray:
    return centroid([Ring(r) for r in rings])


def _window_coverage(rings: Sequence[np.ndarray], n: int):
    """Coverage of raster-space rings restricted to their bounding box.

    Returns ``(i0, j0, cov)``; cells outside the window are empty.
    """
    pts = np.vstack(rings)
    i0 = int(np.clip(np.floor(pts[:, 0].min()), 0, n - 1))
    j0 = int(np.clip(np.floor(pts[:, 1].min()), 0, n - 1))
    i1 = int(np.clip(np.ceil(pts[:, 0].max()), i0 + 1, n))
    j1 = int(np.clip(np.ceil(pts[:, 1].max()), j0 + 1, n))
    off = np.array([i0, j0], dtype=float)
    cov = np.zeros((i1 - i0, j1 - j0))
    for r in rings:
        cov += ring_coverage(r - off, i1 - i0, j1 - j0)
    return i0, j0, np.abs(cov)


def hamming_distance(poly_before, poly_after, resolution: int = HAMMING_RESOLUTION) -> float:
    """Minimum normalized symmetric difference over translations of ``poly_after``.

    ``poly_after`` is first rescaled about its centroid to the area of
    ``poly_before`` and moved onto the same centroid. Areas come from exact
    per-cell coverage on a ``resolution``-square raster spanning the joint
    bounding box padded by the search range (half the joint extent on every
    side). A 9x9 grid over that range is scanned on a coarser raster, then
    refined with Nelder-Mead at full resolution.
    """
    before = _rings_of(poly_before)
    after = _rings_of(poly_after)
    a0, a1 = _area(before), _area(after)
    if a0 <= 0 or a1 <= 0:
        raise GeometryError("zero-area polygon in Hamming distance")
    c0, c1 = _centroid(before), _centroid(after)
    k = math.sqrt(a0 / a1)
    after = [c0 + k * (r - c1) for r in after]

    allpts = np.vstack(before + after)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    extent = float((hi - lo).max())
    reach = 0.5 * extent
    mid = 0.5 * (lo + hi)
    side = extent + 2 * reach
    origin = mid - 0.5 * side

    def objective_at(n):
        cell = side / n
        cov0 = np.zeros((n, n))
        i0, j0, w = _window_coverage([(r - origin) / cell for r in before], n)
        cov0[i0:i0 + w.shape[0], j0:j0 + w.shape[1]] = w
        total0 = cov0.sum()
        scaled = [(r - origin) / cell for r in after]

        def f(shift):
            s = np.clip(np.asarray(shift, dtype=float), -reach, reach) / cell
            i0, j0, w = _window_coverage([r + s for r in scaled], n)
            base = cov0[i0:i0 + w.shape[0], j0:j0 + w.shape[1]]
            # cells outside the window hold only the unshifted polygon
            sym = total0 - base.sum() + np.abs(base - w).sum()
            return float(sym / (total0 + w.sum()))

        return f, cell

    coarse_n = min(COARSE_RESOLUTION, resolution)
    f_coarse, _ = objective_at(coarse_n)
    offsets = np.linspace(-reach, reach, 9)
    best = min(((f_coarse((dx, dy)), (dx, dy)) for dx in offsets for dy in offsets), key=lambda r: r[0])
    f, cell = objective_at(resolution)
    start = np.array(best[1])
    step = offsets[1] - offsets[0]
    simplex = np.array([start, start + [0.5 * step, 0.0], start + [0.0, 0.5 * step]])
    res = minimize(
        f, start, method="Nelder-Mead",
        options={"xatol": 1e-3 * cell, "fatol": 1e-7, "initial_simplex": simplex, "maxiter": 400},
    )
    return max(0.0, float(min(res.fun, f((0.0, 0.0)))))


def relative_position_error(centroids_before, centroids_after) -> float:
    """Mean angle between corresponding centroid-connecting lines, divided by pi."""
    c = np.asarray(centroids_before, dtype=float)
    d = np.asarray(centroids_after, dtype=float)
    if c.shape != d.shape or len(c) < 2:
        raise ValueError("need at least two matching centroids")
    i, j = np.triu_indices(len(c), k=1)
    u = c[i] - c[j]
    w = d[i] - d[j]
    nu = np.hypot(u[:, 0], u[:, 1])
    nw = np.hypot(w[:, 0], w[:, 1])
    ok = (nu > 0) & (nw > 0)
    if not ok.all():
        log.warning("skipping %d pair(s) with coincident centroids", int((~ok).sum()))
    if not ok.any():
        return 0.0
    u, w = u[ok], w[ok]
    # atan2 stays accurate near 0 and pi, where arccos of the cosine does not
    dot = np.einsum("ij,ij->i", u, w)
    cross = u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]
    phi = np.arctan2(np.abs(cross), dot)
    return float(phi.mean() / np.pi)


FIELDS = (
    "e_a", "e_inf", "etilde_a", "etilde_inf", "alpha", "delta", "theta",
    "max_area_error", "runtime_seconds",
)


@dataclass
class DistortionReport:
    e_a: float
    e_inf: float
    etilde_a: float
    etilde_inf: float
    alpha: float
    delta: float
    theta: float
    max_area_error: float = 0.0
    runtime_seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        width = max(map(len, FIELDS))
        return "\n".join(f"{k:<{width}}  {getattr(self, k):.6g}" for k in FIELDS) + "\n"


def local_distortion(T: ProjectionMap) -> dict[str, float]:
    e, et = distortion_fields(T)
    # the outer ring of cells only has one-sided differences; leave it out
    e_a, e_inf = aggregate(_interior(e))
    et_a, et_inf = aggregate(_interior(et))
    return {"e_a": e_a, "e_inf": e_inf, "etilde_a": et_a, "etilde_inf": et_inf}


def polygon_distortion(
    before: Iterable[Region], after: Iterable[Region], resolution: int = HAMMING_RESOLUTION
) -> dict[str, float]:
    before, after = list(before), list(after)
    if [r.id for r in before] != [r.id for r in after]:
        raise ValueError("region lists do not correspond")
    alpha = float(np.mean([aspect_ratio(r) for r in after]))
    delta = float(sum(hamming_distance(r0, r1, resolution) for r0, r1 in zip(before, after)))
    if len(before) >= 2:
        theta = relative_position_error([centroid(r) for r in before], [centroid(r) for r in after])
    else:
        theta = 0.0
    return {"alpha": alpha, "delta": delta, "theta": theta}


def distortion_report(
    T: ProjectionMap,
    before: MapDocument,
    after: MapDocument,
    max_area_error: float = 0.0,
    runtime_seconds: float = 0.0,
    resolution: int = HAMMING_RESOLUTION,
) -> DistortionReport:
    vals = local_distortion(T)
    vals.update(polygon_distortion(before.regions, after.regions, resolution))
    return DistortionReport(**vals, max_area_error=max_area_error, runtime_seconds=runtime_seconds)


def report_for(result, resolution: int = HAMMING_RESOLUTION) -> DistortionReport:
    """Distortion report for a finished solve (a ``CartogramResult``)."""
    return distortion_report(
        result.projection, result.original, result.projected,
        result.max_area_error, result.runtime_seconds, resolution,
    )

