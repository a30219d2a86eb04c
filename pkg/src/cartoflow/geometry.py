"""Planar map geometry: regions, rings, equal-area pre-projection and box normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np


class GeometryError(ValueError):
    """Invalid or degenerate geometry."""


@dataclass(frozen=True)
class GridSpec:
    """An ``lx`` x ``ly`` lattice of unit cells; samples sit at cell centers (i+1/2, j+1/2)."""

    lx: int
    ly: int

    def __post_init__(self):
        if int(self.lx) != self.lx or int(self.ly) != self.ly:
            raise ValueError("grid dimensions must be integers")
        if self.lx < 4 or self.ly < 4:
            raise ValueError(f"grid must be at least 4x4, got {self.lx}x{self.ly}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.lx, self.ly)

    def cell_centers(self) -> np.ndarray:
        """All cell centers as an ``(lx*ly, 2)`` array, x-major."""
        x = np.arange(self.lx) + 0.5
        y = np.arange(self.ly) + 0.5
        gx, gy = np.meshgrid(x, y, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return (
            (pts[:, 0] >= 0) & (pts[:, 0] <= self.lx) & (pts[:, 1] >= 0) & (pts[:, 1] <= self.ly)
        )


@dataclass(frozen=True)
class Affine:
    """Uniform scale plus shift: ``normalized = (p - origin) * scale``."""

    x0: float = 0.0
    y0: float = 0.0
    scale: float = 1.0

    def forward(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return (pts - np.array([self.x0, self.y0])) * self.scale

    def inverse(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts / self.scale + np.array([self.x0, self.y0])


@dataclass(frozen=True, eq=False)
class Ring:
    """A closed ring stored without the repeated closing vertex.

    Outer rings are kept counter-clockwise (positive signed area) and holes
    clockwise, so summing signed areas gives the net area.
    """

    points: np.ndarray
    hole: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise GeometryError("ring points must be an (n, 2) array")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("ring contains non-finite coordinates")
        if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
            pts = pts[:-1]
        object.__setattr__(self, "points", pts)

    @classmethod
    def oriented(cls, points, hole: bool = False) -> "Ring":
        """Build a ring and fix its winding to match ``hole``, ignoring input orientation."""
        ring = cls(points, hole)
        a = signed_area(ring.points)
        if (a < 0 and not hole) or (a > 0 and hole):
            ring = cls(ring.points[::-1].copy(), hole)
        return ring

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, Ring):
            return NotImplemented
        return self.hole == other.hole and np.array_equal(self.points, other.points)

    def with_points(self, pts: np.ndarray) -> "Ring":
        return Ring(pts, self.hole)


@dataclass(frozen=True)
class Region:
    """One mapped unit. ``polygons`` is a list of parts, each ``[outer, *holes]``."""

    id: str
    polygons: tuple[tuple[Ring, ...], ...]
    target: float
    color: str | None = None

    def __post_init__(self):
        if not (self.target > 0 and math.isfinite(self.target)):
            raise GeometryError(f"region {self.id!r}: non-positive target value {self.target}")

    @property
    def rings(self) -> list[Ring]:
        return [r for poly in self.polygons for r in poly]

    def all_points(self) -> np.ndarray:
        return np.vstack([r.points for r in self.rings])

    def map_points(self, fn) -> "Region":
        """Apply ``fn`` (an ``(n, 2) -> (n, 2)`` function) to every ring."""
        polys = tuple(tuple(r.with_points(fn(r.points)) for r in poly) for poly in self.polygons)
        return replace(self, polygons=polys)


@dataclass(frozen=True)
class MapDocument:
    regions: tuple[Region, ...]
    grid: GridSpec | None = None
    # maps the input planar frame onto the grid frame
    frame: Affine = field(default_factory=Affine)

    def __post_init__(self):
        ids = [r.id for r in self.regions]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise GeometryError(f"duplicate region ids: {', '.join(dupes)}")

    def __len__(self):
        return len(self.regions)

    def __getitem__(self, region_id: str) -> Region:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(region_id)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.regions]

    def bounds(self) -> tuple[float, float, float, float]:
        pts = np.vstack([r.all_points() for r in self.regions])
        return (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())

    def map_points(self, fn) -> "MapDocument":
        return replace(self, regions=tuple(r.map_points(fn) for r in self.regions))


# -- polygon primitives ------------------------------------------------------


def signed_area(pts: np.ndarray) -> float:
    """Shoelace area of an open ring; positive for counter-clockwise order."""
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 3:
        return 0.0
    # shift to a local origin to limit cancellation on large coordinates
    p = pts - pts[0]
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(region: Region | Iterable[Ring]) -> float:
    """Net area: outer rings count positive, holes negative."""
    rings = region.rings if isinstance(region, Region) else list(region)
    return float(sum(signed_area(r.points) for r in rings))


def _ring_moments(pts: np.ndarray) -> tuple[float, float, float]:
    p0 = pts[0]
    p = pts - p0
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    mx = ((x + xn) * cross).sum() / 6.0
    my = ((y + yn) * cross).sum() / 6.0
    # moments about the global origin
    return a, mx + a * p0[0], my + a * p0[1]


def centroid(region: Region | Iterable[Ring]) -> np.ndarray:
    """Area-weighted centroid over all rings; holes subtract."""
    rings = region.rings if isinstance(region, Region) else list(region)
    a = mx = my = 0.0
    for r in rings:
        if len(r) < 3:
            continue
        ra, rx, ry = _ring_moments(r.points)
        a += ra
        mx += rx
        my += ry
    if a == 0:
        name = region.id if isinstance(region, Region) else "<rings>"
        raise GeometryError(f"region {name!r} has zero area; centroid undefined")
    return np.array([mx / a, my / a])


def densify(pts: np.ndarray, max_len: float) -> np.ndarray:
    """Insert vertices so no edge of the closed ring is longer than ``max_len``.

    Each edge is subdivided from its lexicographically smaller endpoint so a
    boundary shared by two regions gets bit-identical vertices on both sides.
    """
    pts = np.asarray(pts, dtype=float)
    a = pts
    b = np.roll(pts, -1, axis=0)
    lengths = np.hypot(*(b - a).T)
    counts = np.maximum(1, np.ceil(lengths / max_len).astype(int))
    if np.all(counts == 1):
        return pts.copy()
    out = []
    for p, q, n in zip(a, b, counts):
        out.append(p[None, :])
        if n == 1:
            continue
        flip = (q[0], q[1]) < (p[0], p[1])
        lo, hi = (q, p) if flip else (p, q)
        k = np.arange(1, n)[:, None] / n
        mid = lo + (hi - lo) * k
        out.append(mid[::-1] if flip else mid)
    return np.vstack(out)


def densify_map(doc: MapDocument, max_len: float) -> MapDocument:
    return doc.map_points(lambda p: densify(p, max_len))


# -- pre-projection and normalization -----------------------------------------


@dataclass(frozen=True)
class AlbersParams:
    """Spherical Albers equal-area conic; angles in degrees."""

    lat1: float = 29.5
    lat2: float = 45.5
    lat0: float = 23.0
    lon0: float = -96.0
    radius: float = 6371008.8


def albers_forward(lon, lat, params: AlbersParams) -> tuple[np.ndarray, np.ndarray]:
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    if np.any(np.abs(lat) > 90):
        raise GeometryError("latitude outside [-90, 90]")
    p1, p2, p0 = np.radians([params.lat1, params.lat2, params.lat0])
    n = 0.5 * (math.sin(p1) + math.sin(p2))
    if abs(n) < 1e-12:
        raise GeometryError("standard parallels symmetric about the equator")
    c = math.cos(p1) ** 2 + 2 * n * math.sin(p1)
    r0 = params.radius * math.sqrt(c - 2 * n * math.sin(p0)) / n
    r = params.radius * np.sqrt(c - 2 * n * np.sin(np.radians(lat))) / n
    dlon = (lon - params.lon0 + 180.0) % 360.0 - 180.0
    theta = n * np.radians(dlon)
    return r * np.sin(theta), r0 - r * np.cos(theta)


def albers_inverse(x, y, params: AlbersParams) -> tuple[np.ndarray, np.ndarray]:
    """Planar Albers coordinates back to (lon, lat) degrees."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p1, p2, p0 = np.radians([params.lat1, params.lat2, params.lat0])
    n = 0.5 * (math.sin(p1) + math.sin(p2))
    c = math.cos(p1) ** 2 + 2 * n * math.sin(p1)
    r0 = params.radius * math.sqrt(c - 2 * n * math.sin(p0)) / n
    sgn = 1.0 if n > 0 else -1.0
    rho = sgn * np.hypot(x, r0 - y)
    theta = np.arctan2(sgn * x, sgn * (r0 - y))
    s = (c - (rho * n / params.radius) ** 2) / (2 * n)
    lat = np.degrees(np.arcsin(np.clip(s, -1.0, 1.0)))
    lon = params.lon0 + np.degrees(theta / n)
    return lon, lat


def project_equal_area(doc: MapDocument, params: AlbersParams | None) -> MapDocument:
    """Project (lon, lat) degrees to the Albers plane; ``params=None`` passes through."""
    if params is None:
        return doc

    def fn(pts):
        x, y = albers_forward(pts[:, 0], pts[:, 1], params)
        return np.column_stack([x, y])

    out = doc.map_points(fn)
    # re-fix winding: the projection preserves orientation but be explicit
    regions = tuple(
        replace(
            r,
            polygons=tuple(tuple(Ring.oriented(g.points, g.hole) for g in poly) for poly in r.polygons),
        )
        for r in out.regions
    )
    return replace(out, regions=regions)


def normalize_to_box(doc: MapDocument, size: int, padding: float = 1.5) -> MapDocument:
    """Center the map in a square box of side ``padding * max extent`` and scale it to ``[0, size]^2``."""
    if size < 4 or int(size) != size:
        raise ValueError("grid size must be an integer >= 4")
    xmin, ymin, xmax, ymax = doc.bounds()
    extent = max(xmax - xmin, ymax - ymin)
    if not extent > 0:
        raise GeometryError("degenerate extent: map has zero width and height")
    side = padding * extent
    cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
    step = Affine(cx - 0.5 * side, cy - 0.5 * side, size / side)
    out = doc.map_points(step.forward)
    prev = doc.frame
    frame = Affine(prev.x0 + step.x0 / prev.scale, prev.y0 + step.y0 / prev.scale, prev.scale * step.scale)
    return replace(out, grid=GridSpec(size, size), frame=frame)
