"""Piecewise-bilinear representation of a cartogram projection and its inverse."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GridSpec


class DomainError(ValueError):
    """A point lies outside the domain or the image of a projection."""


class TopologyError(RuntimeError):
    """A projection folds over itself (some cell has non-positive area)."""


_EDGE_TOL = 1e-9


@dataclass(eq=False)
class ProjectionMap:
    """Displaced positions of the ``(Lx+1) x (Ly+1)`` cell corners.

    Inside every unit cell the map is the bilinear interpolant of the four
    displaced corners, which makes it continuous across cell edges.
    """

    corners: np.ndarray
    _index: tuple | None = None

    def __post_init__(self):
        self.corners = np.asarray(self.corners, dtype=float)
        if self.corners.ndim != 3 or self.corners.shape[2] != 2:
            raise ValueError("corners must have shape (lx+1, ly+1, 2)")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.corners.shape[0] - 1, self.corners.shape[1] - 1)

    @classmethod
    def identity(cls, grid: GridSpec) -> "ProjectionMap":
        x = np.arange(grid.lx + 1, dtype=float)
        y = np.arange(grid.ly + 1, dtype=float)
        gx, gy = np.meshgrid(x, y, indexing="ij")
        return cls(np.stack([gx, gy], axis=-1))

    @classmethod
    def from_centers(cls, centers: np.ndarray) -> "ProjectionMap":
        """Corner positions from cell-center endpoints.

        Each corner takes the mean of its four neighbouring centers; corners on
        the box edge keep their normal coordinate on the edge.
        """
        centers = np.asarray(centers, dtype=float)
        lx, ly = centers.shape[:2]
        p = np.pad(centers, ((1, 1), (1, 1), (0, 0)), mode="edge")
        corners = 0.25 * (p[:-1, :-1] + p[1:, :-1] + p[:-1, 1:] + p[1:, 1:])
        corners[0, :, 0] = 0.0
        corners[-1, :, 0] = lx
        corners[:, 0, 1] = 0.0
        corners[:, -1, 1] = ly
        return cls(corners)

    # -- forward ---------------------------------------------------------------

    def apply(self, pts) -> np.ndarray:
        """Map points (shape ``(n, 2)`` or ``(2,)``) through the projection."""
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        p = np.atleast_2d(pts)
        g = self.grid
        hi = np.array([g.lx, g.ly], dtype=float)
        out = (p < -_EDGE_TOL) | (p > hi + _EDGE_TOL)
        if np.any(out):
            bad = p[np.any(out, axis=1)][0]
            raise DomainError(f"point {tuple(bad.tolist())} outside the box [0,{g.lx}]x[0,{g.ly}]")
        res = self._bilinear(np.clip(p, 0.0, hi))
        return res[0] if single else res

    def _bilinear(self, p: np.ndarray) -> np.ndarray:
        """Bilinear evaluation; points beyond the box use the nearest edge cell's formula."""
        g = self.grid
        i = np.clip(np.floor(p[:, 0]), 0, g.lx - 1).astype(np.int64)
        j = np.clip(np.floor(p[:, 1]), 0, g.ly - 1).astype(np.int64)
        u = (p[:, 0] - i)[:, None]
        v = (p[:, 1] - j)[:, None]
        c = self.corners
        c00 = c[i, j]
        # incremental form: exact for the identity grid, since i + (x - i) == x
        out = (
            c00
            + u * (c[i + 1, j] - c00)
            + v * (c[i, j + 1] - c00)
            + (u * v) * (c[i + 1, j + 1] - c[i + 1, j] - c[i, j + 1] + c00)
        )
        # points sitting exactly on a grid corner return the stored corner
        on = ((u == 0) | (u == 1)) & ((v == 0) | (v == 1))
        k = np.flatnonzero(on[:, 0])
        if len(k):
            out[k] = c[i[k] + u[k, 0].astype(np.int64), j[k] + v[k, 0].astype(np.int64)]
        return out

    def cell_signed_areas(self) -> np.ndarray:
        c = self.corners
        p00, p10, p11, p01 = c[:-1, :-1], c[1:, :-1], c[1:, 1:], c[:-1, 1:]
        d1 = p11 - p00
        d2 = p01 - p10
        return 0.5 * (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])

    def cell_jacobians(self) -> np.ndarray:
        """Jacobian at every cell center, shape ``(lx, ly, 2, 2)`` as ``[[dTx/dx, dTx/dy], [dTy/dx, dTy/dy]]``."""
        c = self.corners
        ddx = 0.5 * ((c[1:, :-1] + c[1:, 1:]) - (c[:-1, :-1] + c[:-1, 1:]))
        ddy = 0.5 * ((c[:-1, 1:] + c[1:, 1:]) - (c[:-1, :-1] + c[1:, :-1]))
        return np.stack([ddx, ddy], axis=-1)

    def cell_jacobian_det(self) -> np.ndarray:
        j = self.cell_jacobians()
        return j[..., 0, 0] * j[..., 1, 1] - j[..., 0, 1] * j[..., 1, 0]

    def inverted_cells(self) -> np.ndarray:
        """Indices of cells whose bilinear Jacobian is non-positive at some corner."""
        c = self.corners
        p00, p10, p11, p01 = c[:-1, :-1], c[1:, :-1], c[1:, 1:], c[:-1, 1:]

        def cross(a, o, b):
            return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (
                b[..., 0] - o[..., 0]
            )

        ok = (
            (cross(p10, p00, p01) > 0)
            & (cross(p11, p10, p00) > 0)
            & (cross(p01, p11, p10) > 0)
            & (cross(p00, p01, p11) > 0)
        )
        return np.argwhere(~ok)

    def check_topology(self) -> None:
        bad = self.inverted_cells()
        if len(bad):
            i, j = bad[0]
            raise TopologyError(f"{len(bad)} inverted cell(s), first at cell ({i}, {j})")

    # -- inverse ---------------------------------------------------------------

    def _build_index(self):
        c = self.corners
        quad = np.stack([c[:-1, :-1], c[1:, :-1], c[:-1, 1:], c[1:, 1:]], axis=2)
        lo = quad.min(axis=2).reshape(-1, 2)
        hi = quad.max(axis=2).reshape(-1, 2)
        g = self.grid
        origin = lo.min(axis=0)
        top = hi.max(axis=0)
        nb = np.array([g.lx, g.ly])
        size = np.maximum((top - origin) / nb, 1e-12)
        b0 = np.clip(np.floor((lo - origin) / size).astype(np.int64), 0, nb - 1)
        b1 = np.clip(np.floor((hi - origin) / size).astype(np.int64), 0, nb - 1)
        wx = b1[:, 0] - b0[:, 0] + 1
        wy = b1[:, 1] - b0[:, 1] + 1
        cnt = wx * wy
        cell = np.repeat(np.arange(len(cnt)), cnt)
        k = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        bx = b0[cell, 0] + k // wy[cell]
        by = b0[cell, 1] + k % wy[cell]
        bucket = bx * nb[1] + by
        order = np.argsort(bucket, kind="stable")
        cells_sorted = cell[order]
        starts = np.searchsorted(bucket[order], np.arange(nb[0] * nb[1] + 1))
        self._index = (origin, top, size, nb, cells_sorted, starts)
        return self._index

    def invert(self, pts, strict: bool = True) -> np.ndarray:
        """Preimages of points under the projection.

        Candidate cells come from a bucket index over the displaced cells;
        each candidate's bilinear system is solved by Newton iteration. With
        ``strict=False`` points that have no preimage come back as NaN.
        """
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        q = np.atleast_2d(pts)
        origin, top, size, nb, cells_sorted, starts = self._index or self._build_index()
        g = self.grid
        result = np.full_like(q, np.nan)

        inside = np.all((q >= origin - _EDGE_TOL) & (q <= top + _EDGE_TOL), axis=1)
        qi = np.flatnonzero(inside)
        b = np.clip(np.floor((q[qi] - origin) / size).astype(np.int64), 0, nb - 1)
        bucket = b[:, 0] * nb[1] + b[:, 1]
        s, e = starts[bucket], starts[bucket + 1]
        cnt = e - s
        owner = np.repeat(np.arange(len(qi)), cnt)
        k = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        cand = cells_sorted[np.repeat(s, cnt) + k]
        ci, cj = cand // g.ly, cand % g.ly
        u, v, resid = _solve_bilinear(self.corners, ci, cj, q[qi][owner])
        viol = np.maximum.reduce([np.zeros_like(u), -u, u - 1, -v, v - 1])
        good = (viol < 1e-7) & (resid < 1e-8 * max(1.0, float(np.abs(top).max())))
        gi = np.flatnonzero(good)
        if len(gi):
            # per query, keep the good candidate with the smallest violation
            order = gi[np.lexsort((viol[gi], owner[gi]))]
            o = owner[order]
            first = np.ones(len(o), dtype=bool)
            first[1:] = o[1:] != o[:-1]
            pick = order[first]
            uu = np.clip(u[pick], 0, 1)
            vv = np.clip(v[pick], 0, 1)
            result[qi[owner[pick]]] = np.column_stack([ci[pick] + uu, cj[pick] + vv])
        if strict and np.any(np.isnan(result[:, 0])):
            bad = q[np.isnan(result[:, 0])][0]
            raise DomainError(f"point {tuple(bad.tolist())} outside projected domain")
        return result[0] if single else result


def _solve_bilinear(corners, ci, cj, q, iters: int = 60):
    p00 = corners[ci, cj]
    e = corners[ci + 1, cj] - p00
    f = corners[ci, cj + 1] - p00
    g = corners[ci + 1, cj + 1] - corners[ci + 1, cj] - corners[ci, cj + 1] + p00
    r0 = q - p00
    u = np.full(len(q), 0.5)
    v = np.full(len(q), 0.5)
    for _ in range(iters):
        fx = e[:, 0] * u + f[:, 0] * v + g[:, 0] * u * v - r0[:, 0]
        fy = e[:, 1] * u + f[:, 1] * v + g[:, 1] * u * v - r0[:, 1]
        a = e[:, 0] + g[:, 0] * v
        b = f[:, 0] + g[:, 0] * u
        c = e[:, 1] + g[:, 1] * v
        d = f[:, 1] + g[:, 1] * u
        det = a * d - b * c
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        du = (d * fx - b * fy) / det
        dv = (a * fy - c * fx) / det
        u = np.clip(u - du, -1.0, 2.0)
        v = np.clip(v - dv, -1.0, 2.0)
        if np.all(np.abs(du) + np.abs(dv) < 1e-15):
            break
    fx = e[:, 0] * u + f[:, 0] * v + g[:, 0] * u * v - r0[:, 0]
    fy = e[:, 1] * u + f[:, 1] * v + g[:, 1] * u * v - r0[:, 1]
    return u, v, np.hypot(fx, fy)


def apply(T: ProjectionMap, p) -> np.ndarray:
    return T.apply(p)


def invert(T: ProjectionMap, q) -> np.ndarray:
    return T.invert(q)


def compose(t2: ProjectionMap, t1: ProjectionMap) -> ProjectionMap:
    """Piecewise-bilinear approximation of ``t2 . t1``, exact at the corners.

    Corners that ``t1`` moves outside the box are evaluated with the
    bilinear formula of ``t2``'s nearest edge cell, which is exact whenever
    ``t2`` is affine there.
    """
    if t1.grid != t2.grid:
        raise ValueError("projections live on different grids")
    flat = t1.corners.reshape(-1, 2)
    out = t2._bilinear(flat).reshape(t1.corners.shape)
    if _keeps_box(t1) and _keeps_box(t2):
        # so does the composite; remove rounding drift on the edges
        _pin_edges(out, t1.grid)
    return ProjectionMap(out)


def _keeps_box(T: ProjectionMap) -> bool:
    c, g = T.corners, T.grid
    return bool(
        np.all(c[0, :, 0] == 0) and np.all(c[-1, :, 0] == g.lx)
        and np.all(c[:, 0, 1] == 0) and np.all(c[:, -1, 1] == g.ly)
    )


def _pin_edges(c: np.ndarray, g) -> None:
    c[0, :, 0] = 0.0
    c[-1, :, 0] = g.lx
    c[:, 0, 1] = 0.0
    c[:, -1, 1] = g.ly


def graticule(T: ProjectionMap, spacing: int, inverse: bool = False) -> list[np.ndarray]:
    """Images (or, with ``inverse``, preimages) of the lines ``x = k*spacing`` and ``y = k*spacing``.

    Lines are sampled once per cell. Inverse lines are split where a sample
    has no preimage.
    """
    g = T.grid
    if spacing <= 0 or g.lx % spacing or g.ly % spacing:
        raise ValueError(f"spacing {spacing} must divide the grid size")
    lines = []
    ys = np.arange(g.ly + 1, dtype=float)
    xs = np.arange(g.lx + 1, dtype=float)
    for x in range(0, g.lx + 1, spacing):
        lines.append(np.column_stack([np.full_like(ys, x), ys]))
    for y in range(0, g.ly + 1, spacing):
        lines.append(np.column_stack([xs, np.full_like(xs, y)]))
    if not inverse:
        return [T.apply(line) for line in lines]
    out = []
    for line in lines:
        pre = T.invert(line, strict=False)
        ok = ~np.isnan(pre[:, 0])
        # split at samples without a preimage
        breaks = np.flatnonzero(np.diff(ok.astype(np.int8)) != 0) + 1
        for seg, seg_ok in zip(np.split(pre, breaks), np.split(ok, breaks)):
            if seg_ok[0] and len(seg) > 1:
                out.append(seg)
    return out
