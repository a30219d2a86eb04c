"""Outer iteration: rasterize, solve, compose, re-project, until areas match."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ._kernels import warm_up
from .density import gaussian_blur, rasterize
from .diffusion import DiffusionOptions, integrate_diffusion
from .flow import StepOptions, build_flow_field, integrate
from .geometry import MapDocument, densify_map, polygon_area
from .projection import ProjectionMap, compose
from .spectral import SpectralPlan

log = logging.getLogger(__name__)


@dataclass
class SolveOptions:
    max_area_error: float = 0.01
    max_iterations: int = 16
    # None means grid size / 128
    blur_sigma: float | None = None
    algorithm: str = "fast"
    workers: int = 1
    # longest polygon edge, in cells, before projection
    densify: float = 0.5
    step: StepOptions = field(default_factory=StepOptions)
    diffusion: DiffusionOptions = field(default_factory=DiffusionOptions)

    def __post_init__(self):
        if not 0 < self.max_area_error < 1:
            raise ValueError("max_area_error must lie in (0, 1)")
        if self.algorithm not in ("fast", "diffusion"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.blur_sigma is not None and self.blur_sigma < 0:
            raise ValueError("negative blur width")


@dataclass
class RoundStats:
    iteration: int
    steps: int
    rejected: int
    transforms: int
    max_area_error: float
    seconds: float


@dataclass
class CartogramResult:
    projected: MapDocument
    original: MapDocument
    projection: ProjectionMap
    achieved_area: dict[str, float]
    target_area: dict[str, float]
    relative_error: dict[str, float]
    iterations: int
    converged: bool
    rounds: list[RoundStats]
    runtime_seconds: float
    blur_transforms: int = 0

    @property
    def max_area_error(self) -> float:
        return max(self.relative_error.values())

    @property
    def steps(self) -> int:
        return sum(r.steps for r in self.rounds)

    @property
    def transforms_per_round(self) -> list[int]:
        return [r.transforms for r in self.rounds]

    def region_properties(self) -> dict[str, dict]:
        scale2 = self.projected.frame.scale ** 2
        return {
            rid: {
                "target_area": self.target_area[rid] / scale2,
                "achieved_area": self.achieved_area[rid] / scale2,
                "relative_error": self.relative_error[rid],
            }
            for rid in self.achieved_area
        }


def area_errors(doc: MapDocument) -> tuple[dict, dict, dict]:
    """Achieved areas, target areas and ``|achieved - target| / target`` per region.

    Target areas split the current total region area in proportion to the
    target values.
    """
    areas = {r.id: polygon_area(r) for r in doc.regions}
    total_area = sum(areas.values())
    total_target = sum(r.target for r in doc.regions)
    targets = {r.id: r.target * total_area / total_target for r in doc.regions}
    errors = {k: abs(areas[k] - targets[k]) / targets[k] for k in areas}
    return areas, targets, errors


def solve_cartogram(doc: MapDocument, options: SolveOptions | None = None) -> CartogramResult:
    """Iterate the flow solver until every region is within tolerance of its target area.

    ``doc`` must already be normalized to its grid. Each round rasterizes the
    current cartogram, integrates one flow and composes it into the running
    projection; polygons are always the running projection applied to the
    (densified) input. On hitting the iteration cap the best round is
    returned with ``converged=False``.
    """
    opt = options or SolveOptions()
    if doc.grid is None:
        raise ValueError("map must be normalized to a grid first")
    grid = doc.grid
    sigma = grid.lx / 128 if opt.blur_sigma is None else opt.blur_sigma
    original = densify_map(doc, opt.densify) if opt.densify else doc
    plan = SpectralPlan(grid.lx, grid.ly, opt.workers)
    blur_plan = SpectralPlan(grid.lx, grid.ly, opt.workers)

    warm_up()
    t_start = time.perf_counter()
    cumulative = ProjectionMap.identity(grid)
    current = original
    rounds: list[RoundStats] = []
    best = None
    for k in range(1, opt.max_iterations + 1):
        t0 = time.perf_counter()
        density = rasterize(current, min_cells=1.0 if k == 1 else 0.0, workers=opt.workers)
        if k == 1 and sigma > 0:
            density = gaussian_blur(density, sigma, blur_plan)
        before = plan.transforms_executed
        if opt.algorithm == "fast":
            field_ = build_flow_field(density, plan)
            step_map, _, stats = integrate(field_, opt.step, opt.workers)
        else:
            step_map, _, stats = integrate_diffusion(density, opt.diffusion, opt.workers, plan)
        step_map.check_topology()
        cumulative = compose(step_map, cumulative)
        current = original.map_points(cumulative.apply)
        areas, targets, errors = area_errors(current)
        worst = max(errors.values())
        rounds.append(
            RoundStats(
                k, stats.steps, stats.rejected, plan.transforms_executed - before, worst,
                time.perf_counter() - t0,
            )
        )
        log.info("iteration %d: max relative area error %.4g (%d steps)", k, worst, stats.steps)
        if len(rounds) > 1 and worst >= rounds[-2].max_area_error:
            log.warning("area error did not decrease in iteration %d", k)
        if best is None or worst < best[0]:
            best = (worst, k, current, cumulative, areas, targets, errors)
        if worst < opt.max_area_error:
            break

    worst, k_best, current, cumulative, areas, targets, errors = best
    return CartogramResult(
        projected=current,
        original=original,
        projection=cumulative,
        achieved_area=areas,
        target_area=targets,
        relative_error=errors,
        iterations=len(rounds),
        converged=worst < opt.max_area_error,
        rounds=rounds,
        runtime_seconds=time.perf_counter() - t_start,
        blur_transforms=blur_plan.transforms_executed,
    )
