"""Diffusion-cartogram baseline in the same flux framework.

Each cosine mode decays as exp(-(m^2/Lx^2 + n^2/Ly^2) t) (diffusivity folded
into the time unit), so density and flux must be re-synthesized at every
time the integrator asks for.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .density import DensityGrid
from .flow import (
    IntegrationError,
    IntegrationStats,
    PaddedFields,
    StepOptions,
    adaptive_integrate,
)
from .geometry import GridSpec
from .projection import ProjectionMap
from .spectral import SpectralPlan


class DiffusionState:
    """Cosine spectrum of the initial density plus cached decay exponents."""

    def __init__(self, density: DensityGrid, plan: SpectralPlan | None = None):
        lx, ly = density.rho0.shape
        self.grid = GridSpec(lx, ly)
        self.plan = plan or SpectralPlan(lx, ly)
        self.rho_tilde = self.plan.forward_cos_cos(density.rho0)
        self.rho_bar = density.rho_bar
        m = np.arange(lx, dtype=float)[:, None]
        n = np.arange(ly, dtype=float)[None, :]
        self._rate = m**2 / lx**2 + n**2 / ly**2
        norm = 1.0 / (lx * ly)
        self._wx = norm * m / (np.pi * lx) * np.ones((1, ly))
        self._wy = norm * n / (np.pi * ly) * np.ones((lx, 1))
        self._cache: OrderedDict[float, PaddedFields] = OrderedDict()
        self._lock = threading.Lock()

    def decay(self, t: float) -> np.ndarray:
        return np.exp(-self._rate * t)

    def fields(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flux components and density on the cell centers at time ``t`` (3 transforms)."""
        if t < 0:
            raise ValueError("negative time")
        c = self.rho_tilde * self.decay(t)
        jx = self.plan.inverse_sin_cos(c, self._wx)
        jy = self.plan.inverse_cos_sin(c, self._wy)
        rho = self.plan.inverse_cos_cos(c)
        return jx, jy, rho

    def velocity_grid(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        jx, jy, rho = self.fields(t)
        _check_positive(rho, t)
        return jx / rho, jy / rho

    def _fields_at(self, t: float) -> PaddedFields:
        with self._lock:
            return self._fields_at_locked(t)

    def _fields_at_locked(self, t: float) -> PaddedFields:
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        jx, jy, rho = self.fields(t)
        _check_positive(rho, t)
        it = PaddedFields(jx, jy, rho)
        self._cache[t] = it
        while len(self._cache) > 3:
            self._cache.popitem(last=False)
        return it

    def velocity(self, pts: np.ndarray, t: float) -> np.ndarray:
        return self._fields_at(t).velocity(pts, 1.0, 0.0, 0.0)


def _check_positive(rho, t):
    if np.any(~(rho > 0)):
        i, j = np.argwhere(~(rho > 0))[0]
        raise IntegrationError(f"non-positive diffusion density at cell ({i}, {j}), t={t:.6g}")


def diffusion_velocity_grid(state: DiffusionState, t: float) -> tuple[np.ndarray, np.ndarray]:
    return state.velocity_grid(t)


@dataclass
class DiffusionOptions:
    eps_step: float = 1e-2
    dt_init: float = 1.0
    dt_min: float = 1e-8
    t_max: float = 1e10
    # displacement per unit time below which the flow counts as finished, in units of L
    eps_conv: float = 1e-9


def integrate_diffusion(
    density: DensityGrid,
    options: DiffusionOptions | None = None,
    workers: int = 1,
    plan: SpectralPlan | None = None,
) -> tuple[ProjectionMap, np.ndarray, IntegrationStats]:
    """Carry every cell center along the diffusion flow until it stalls."""
    opt = options or DiffusionOptions()
    grid = GridSpec(*density.rho0.shape)
    plan = plan or SpectralPlan(grid.lx, grid.ly, workers)
    state = DiffusionState(density, plan)
    start = grid.cell_centers()
    # uniform input: every non-constant mode is rounding noise
    modes = np.abs(state.rho_tilde).ravel()
    if modes[1:].max(initial=0.0) <= 1e-13 * modes[0]:
        stats = IntegrationStats(steps=1, evaluations=1, t_final=0.0)
        return ProjectionMap.from_centers(start.reshape(grid.lx, grid.ly, 2)), start, stats
    threshold = opt.eps_conv * max(grid.lx, grid.ly)
    done = {"flag": False}

    def stop(v, dt, t):
        if np.abs(v).max() * dt < threshold:
            done["flag"] = True
        return done["flag"]

    steps = StepOptions(
        eps_step=opt.eps_step, dt_init=opt.dt_init, dt_max=np.inf, dt_min=opt.dt_min
    )
    end, stats = adaptive_integrate(state.velocity, start, grid, opt.t_max, steps, workers, stop)
    if not done["flag"]:
        raise IntegrationError(f"diffusion flow did not settle by t_max={opt.t_max:g}")
    return ProjectionMap.from_centers(end.reshape(grid.lx, grid.ly, 2)), end, stats
