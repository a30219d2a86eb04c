"""Contiguous density-equalizing cartograms.

The fast flow-based solver equalizes density linearly in time, so the flux is
computed once per round from three cosine/sine transforms; a diffusion
baseline and distortion metrics are included for comparison.
"""

from .density import DensityGrid, RasterizationError, gaussian_blur, rasterize
from .diffusion import integrate_diffusion
from .flow import FlowField, IntegrationError, build_flow_field, integrate, velocity
from .geometry import (
    Affine,
    AlbersParams,
    GeometryError,
    GridSpec,
    MapDocument,
    Region,
    Ring,
    centroid,
    normalize_to_box,
    polygon_area,
)
from .io import InputError, parse_input, to_geojson, to_svg
from .metrics import DistortionReport, distortion_report, report_for
from .projection import DomainError, ProjectionMap, TopologyError, compose, graticule
from .solver import CartogramResult, SolveOptions, solve_cartogram
from .spectral import SpectralPlan

__version__ = "0.1.0"

__all__ = [
    "Affine", "AlbersParams", "CartogramResult", "DensityGrid", "DistortionReport",
    "DomainError", "FlowField", "GeometryError", "GridSpec", "InputError",
    "IntegrationError", "MapDocument", "ProjectionMap", "RasterizationError", "Region",
    "Ring", "SolveOptions", "SpectralPlan", "TopologyError", "build_flow_field",
    "centroid", "compose", "distortion_report", "gaussian_blur", "graticule",
    "integrate", "integrate_diffusion", "normalize_to_box", "parse_input",
    "polygon_area", "rasterize", "report_for", "solve_cartogram", "to_geojson",
    "to_svg", "velocity",
]
