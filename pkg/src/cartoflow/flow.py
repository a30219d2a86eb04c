"""Fast flow-based solver with linear density equalization.

With rho(t) = (1 - t) rho0 + t rho_bar the flux J = rho v does not depend on
time for 0 <= t <= 1, so it is synthesized once from the cosine spectrum of
rho0 and the integration only interpolates and divides.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import velocity_kernel
from .density import DensityGrid
from .geometry import GridSpec
from .projection import ProjectionMap
from .spectral import SpectralPlan

log = logging.getLogger(__name__)

RHO_FLOOR = 1e-8


class IntegrationError(RuntimeError):
    """Step size underflow or non-convergence."""


def default_workers() -> int:
    env = os.environ.get("CARTOFLOW_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def flux_weights(lx: int, ly: int) -> tuple[np.ndarray, np.ndarray]:
    """``m / (m^2 Ly^2 + n^2 Lx^2)`` and ``n / (...)``, zero at (0, 0)."""
    m = np.arange(lx, dtype=float)[:, None]
    n = np.arange(ly, dtype=float)[None, :]
    den = m**2 * ly**2 + n**2 * lx**2
    den[0, 0] = 1.0
    return m / den, n / den


def _pad(a: np.ndarray, zero_x: bool, zero_y: bool) -> np.ndarray:
    """Extend cell-centered samples to the box edges.

    A component normal to an edge is pinned to zero there (no flow through
    the box); everything else is held constant across the half-cell margin.
    """
    p = np.pad(a, 1, mode="edge")
    if zero_x:
        p[0, :] = 0.0
        p[-1, :] = 0.0
    if zero_y:
        p[:, 0] = 0.0
        p[:, -1] = 0.0
    return p


class PaddedFields:
    """Flux and density extended from cell centers to the box edges.

    Nodes are the cell centers plus the edges themselves, so the outermost
    interpolation intervals are half a cell wide.
    """

    def __init__(self, jx: np.ndarray, jy: np.ndarray, rho: np.ndarray):
        lx, ly = rho.shape
        self.jx = _pad(jx, True, False)
        self.jy = _pad(jy, False, True)
        self.rho = _pad(rho, False, False)
        self.xs = np.concatenate([[0.0], np.arange(lx) + 0.5, [float(lx)]])
        self.ys = np.concatenate([[0.0], np.arange(ly) + 0.5, [float(ly)]])

    def velocity(self, pts: np.ndarray, a: float, b: float, floor: float) -> np.ndarray:
        """``J / (a * rho + b)`` at ``pts``, bilinear in every cell."""
        pts = np.ascontiguousarray(pts, dtype=float)
        out = np.empty_like(pts)
        clipped = velocity_kernel(self.jx, self.jy, self.rho, self.xs, self.ys, pts, a, b, floor, out)
        if clipped:
            warnings.warn(
                f"density fell below the positivity floor at {clipped} point(s)", RuntimeWarning
            )
        return out


@dataclass
class FlowField:
    jx: np.ndarray
    jy: np.ndarray
    rho0: np.ndarray
    rho_bar: float
    transforms: int = 0
    _padded: PaddedFields | None = field(default=None, repr=False)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(*self.rho0.shape)

    @property
    def is_zero(self) -> bool:
        # uniform input leaves only rounding noise in the flux
        scale = self.rho_bar * max(self.rho0.shape)
        return max(np.abs(self.jx).max(), np.abs(self.jy).max()) <= 1e-13 * scale

    @property
    def padded(self) -> PaddedFields:
        if self._padded is None:
            self._padded = PaddedFields(self.jx, self.jy, self.rho0)
        return self._padded


def build_flow_field(density: DensityGrid, plan: SpectralPlan | None = None) -> FlowField:
    """Flux of the linear-equalization flow: one forward and two inverse transforms."""
    lx, ly = density.rho0.shape
    plan = plan or SpectralPlan(lx, ly)
    before = plan.transforms_executed
    coeffs = plan.forward_cos_cos(density.rho0)
    wx, wy = flux_weights(lx, ly)
    jx = (ly / np.pi) * plan.inverse_sin_cos(coeffs, wx)
    jy = (lx / np.pi) * plan.inverse_cos_sin(coeffs, wy)
    return FlowField(jx, jy, density.rho0, density.rho_bar, plan.transforms_executed - before)


def velocity(field: FlowField, pts: np.ndarray, t: float) -> np.ndarray:
    """Velocity ``J / ((1 - t) rho0 + t rho_bar)`` at ``pts`` (shape ``(n, 2)``)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if t >= 1.0:
        return np.zeros_like(pts)
    return field.padded.velocity(pts, 1.0 - t, t * field.rho_bar, RHO_FLOOR * field.rho_bar)


def velocity_at(field: FlowField, p, t: float) -> tuple[float, float]:
    p = np.asarray(p, dtype=float)
    g = field.grid
    if not (0 <= p[0] <= g.lx and 0 <= p[1] <= g.ly):
        raise ValueError(f"point {tuple(p.tolist())} outside the box")
    v = velocity(field, p[None, :], t)[0]
    return float(v[0]), float(v[1])


@dataclass
class StepOptions:
    eps_step: float = 1e-2
    dt_init: float = 0.25
    dt_max: float = 0.25
    dt_min: float = 1e-8
    grow: float = 1.5
    shrink: float = 0.5


@dataclass
class IntegrationStats:
    steps: int = 0
    rejected: int = 0
    evaluations: int = 0
    t_final: float = 0.0


class _Evaluator:
    """Evaluates a velocity function over point chunks, optionally on threads.

    Per-point arithmetic is elementwise, so the result is bit-identical for
    any worker count.
    """

    def __init__(self, fn, workers: int):
        self.fn = fn
        self.workers = max(1, int(workers))
        self.pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def __call__(self, pts, t):
        if self.pool is None or len(pts) < 4 * self.workers:
            return self.fn(pts, t)
        chunks = np.array_split(pts, self.workers)
        return np.concatenate(list(self.pool.map(lambda c: self.fn(c, t), chunks)))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def adaptive_integrate(
    fn,
    pts: np.ndarray,
    grid: GridSpec,
    t_end: float = 1.0,
    options: StepOptions | None = None,
    workers: int = 1,
    stop=None,
) -> tuple[np.ndarray, IntegrationStats]:
    """Advance all points together with an Euler predictor and midpoint corrector.

    The step is accepted when the largest per-coordinate gap between the
    two estimates is below ``eps_step``; the worst point governs a single
    shared step. ``stop(v, dt, t)`` may end the run early after an accepted
    step (used by the diffusion baseline).
    """
    opt = options or StepOptions()
    p = np.array(pts, dtype=float)
    hi = np.array([grid.lx, grid.ly], dtype=float)
    stats = IntegrationStats()
    evaluate = _Evaluator(fn, workers)
    t = 0.0
    dt = opt.dt_init
    try:
        v0 = evaluate(p, t)
        stats.evaluations += 1
        while t < t_end:
            dt = min(dt, t_end - t)
            pred = p + dt * v0
            vmid = evaluate(0.5 * (p + pred), t + 0.5 * dt)
            stats.evaluations += 1
            corr = p + dt * vmid
            gap = np.abs(pred - corr)
            err = gap.max() if len(gap) else 0.0
            if err < opt.eps_step:
                p = np.clip(corr, 0.0, hi)
                t = t + dt if t + dt < t_end else t_end
                stats.steps += 1
                v_step = v0
                step = dt
                if t < t_end:
                    v0 = evaluate(p, t)
                    stats.evaluations += 1
                if stop is not None and stop(v_step, step, t):
                    break
                dt = min(dt * opt.grow, opt.dt_max)
            else:
                stats.rejected += 1
                dt *= opt.shrink
                if dt < opt.dt_min:
                    worst = np.unravel_index(np.argmax(gap), gap.shape)[0]
                    raise IntegrationError(
                        f"time step underflow at t={t:.6g}; stiffest point at {tuple(p[worst].tolist())}"
                    )
    finally:
        evaluate.close()
    stats.t_final = t
    return p, stats


def integrate(
    field: FlowField,
    options: StepOptions | None = None,
    workers: int = 1,
) -> tuple[ProjectionMap, np.ndarray, IntegrationStats]:
    """Carry every cell center from t=0 to t=1.

    Returns the corner-grid projection, the raw cell-center endpoints and
    step statistics.
    """
    grid = field.grid
    start = grid.cell_centers()
    if field.is_zero:
        # velocity vanishes identically; one step of length 1 is exact
        stats = IntegrationStats(steps=1, evaluations=1, t_final=1.0)
        return ProjectionMap.from_centers(start.reshape(grid.lx, grid.ly, 2)), start, stats
    end, stats = adaptive_integrate(
        lambda p, t: velocity(field, p, t), start, grid, 1.0, options, workers
    )
    log.debug("flow integration: %d steps, %d rejected", stats.steps, stats.rejected)
    return ProjectionMap.from_centers(end.reshape(grid.lx, grid.ly, 2)), end, stats


def jacobian_determinant_check(field: FlowField, projection: ProjectionMap) -> float:
    """Largest ``|det(grad T) * rho_bar / rho0 - 1|`` over interior cells."""
    det = projection.cell_jacobian_det()
    ratio = det * field.rho_bar / field.rho0
    return float(np.abs(ratio[1:-1, 1:-1] - 1.0).max())
